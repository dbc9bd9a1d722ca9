//! `svx`: generate datasets and workloads, build and query index
//! structures, and run the benchmark grid.
//!
//! Every subcommand accepts `--config <file.toml>` holding any
//! `BenchmarkConfig` field; flags given on the command line win.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use svx_core::evalkit::{oracle_query, recall};
use svx_core::workbench::{
    density_profile, generate_dataset, load_dataset, load_workload, report_from_file,
    run_benchmark, save_dataset, save_workload, select_queries, write_lemmas, write_summary,
    BenchmarkConfig, DatasetSpec, QueryShape, SelectivityGroup,
};
use svx_core::{IndexKind, IndexStructure, Rect, SpatialVisualRangeQuery, VfiTrees};

#[derive(Parser)]
#[command(
    name = "svx",
    version,
    about = "Spatial-visual index structures over a simulated paged disk"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    Gen {
        /// TOML dataset spec (n, d, spatial_clusters, visual_clusters, coupling, seed).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Select a query workload from a dataset by selectivity group.
    Queries {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "SU-VU")]
        group: SelectivityGroup,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Query rectangle side; defaults to the configured spatial range.
        #[arg(long)]
        side: Option<f64>,
        /// Visual threshold; defaults to the configured sigma.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        first_qid: u64,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build one index structure and persist it to a directory.
    Build {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        kind: IndexKind,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one query against a built index.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// `min_x,min_y,max_x,max_y`
        #[arg(long, requires = "vector", conflicts_with = "workload")]
        rect: Option<String>,
        /// Comma-separated query vector.
        #[arg(long, allow_hyphen_values = true)]
        vector: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        e_s: f64,
        #[arg(long, default_value_t = 0)]
        e_v: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take the query from a workload file instead.
        #[arg(long, requires = "qid")]
        workload: Option<PathBuf>,
        #[arg(long)]
        qid: Option<u64>,
        /// Also score the answer against this dataset's exact answer.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the full benchmark and write report files.
    Bench {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Comma-separated structure names.
        #[arg(long, value_delimiter = ',')]
        structures: Option<Vec<IndexKind>>,
        /// Comma-separated selectivity groups.
        #[arg(long, value_delimiter = ',')]
        groups: Option<Vec<SelectivityGroup>>,
        #[arg(long)]
        queries_per_group: Option<usize>,
        #[arg(long)]
        timing_runs: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Skip the sweep series files.
        #[arg(long)]
        no_series: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute summaries and lemma verdicts from a report file.
    Report {
        report: PathBuf,
        /// Write summary.csv and lemmas.csv here instead of printing.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by the subcommands that read a configuration.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tables: Option<usize>,
    #[arg(long)]
    functions: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    page_size: Option<usize>,
    #[arg(long)]
    t_disk: Option<f64>,
    #[arg(long)]
    fan_out: Option<usize>,
    /// Secondary trees for every table (`per-table`) or table 0 only (`first-table`).
    #[arg(long, value_parser = parse_vfi_trees)]
    vfi_trees: Option<VfiTrees>,
    #[arg(long)]
    e_s: Option<f64>,
    #[arg(long)]
    e_v: Option<usize>,
    #[arg(long)]
    range_scale: Option<f64>,
}

fn parse_vfi_trees(s: &str) -> std::result::Result<VfiTrees, String> {
    match s {
        "per-table" => Ok(VfiTrees::PerTable),
        "first-table" => Ok(VfiTrees::FirstTable),
        _ => Err(format!("expected per-table or first-table, got {s:?}")),
    }
}

impl Common {
    fn resolve(&self) -> Result<BenchmarkConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => BenchmarkConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { cfg.$target = v; })*
            };
        }
        set!(seed => seed, tables => tables, functions => functions, page_size => page_size,
             t_disk => t_disk, fan_out => fan_out, vfi_trees => vfi_trees, e_s => default_e_s,
             e_v => default_e_v, range_scale => range_scale);
        if let Some(w) = self.width {
            cfg.width = Some(w);
        }
        Ok(cfg)
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {x:?}"))
        })
        .collect()
}

fn dataset_of(cfg: &mut BenchmarkConfig, flag: Option<PathBuf>) -> Result<svx_core::Dataset> {
    if flag.is_some() {
        cfg.dataset = flag;
    }
    let Some(path) = cfg.dataset.clone() else {
        bail!("no dataset: pass --dataset or set `dataset` in the config file");
    };
    load_dataset(&path).with_context(|| format!("loading {}", path.display()))
}

fn gen(
    spec: Option<PathBuf>,
    n: Option<usize>,
    d: Option<usize>,
    out: &Path,
    common: &Common,
) -> Result<()> {
    let cfg = common.resolve()?;
    let mut spec = match spec {
        Some(p) => toml::from_str::<DatasetSpec>(&fs::read_to_string(&p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => match cfg.spec.clone() {
            Some(s) => s,
            None => DatasetSpec::standard(n.unwrap_or(2000), d.unwrap_or(32), cfg.seed),
        },
    };
    if let Some(n) = n {
        spec.n = n;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if d.is_some_and(|d| d != spec.d) {
        bail!(
            "--d {} conflicts with the spec's dimension {}",
            d.unwrap(),
            spec.d
        );
    }
    let ds = generate_dataset(&spec)?;
    save_dataset(&ds, out)?;
    println!(
        "wrote {} images (d = {}) to {}",
        ds.len(),
        ds.dim(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn queries(
    dataset: Option<PathBuf>,
    group: SelectivityGroup,
    count: usize,
    side: Option<f64>,
    sigma: Option<f64>,
    first_qid: u64,
    out: &Path,
    common: &Common,
) -> Result<()> {
    let mut cfg = common.resolve()?;
    let ds = dataset_of(&mut cfg, dataset)?;
    let mut shape: QueryShape = cfg.shape(&ds)?;
    if let Some(s) = side {
        shape.side = s;
    }
    if let Some(s) = sigma {
        shape.sigma = s;
    }
    let w = select_queries(
        &ds,
        &density_profile(&ds),
        group,
        count,
        cfg.seed,
        &shape,
        first_qid,
    )?;
    save_workload(&w, out)?;
    println!(
        "wrote {} {group} queries (side {}, sigma {}) to {}",
        w.len(),
        shape.side,
        shape.sigma,
        out.display()
    );
    Ok(())
}

fn build(dataset: Option<PathBuf>, kind: IndexKind, out: &Path, common: &Common) -> Result<()> {
    let mut cfg = common.resolve()?;
    let ds = dataset_of(&mut cfg, dataset)?;
    let family = cfg.family(&ds)?;
    let idx = IndexStructure::build(kind, &ds, &cfg.index_config(), &family)?;
    idx.save(out)?;
    println!(
        "built {kind} over {} images into {}",
        idx.len(),
        out.display()
    );
    for (_, f) in idx.store().files() {
        println!("  {:8} {:6} pages", f.name(), f.page_count());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn query(
    index: &Path,
    rect: Option<String>,
    vector: Option<String>,
    sigma: Option<f64>,
    e_s: f64,
    e_v: usize,
    seed: u64,
    workload: Option<PathBuf>,
    qid: Option<u64>,
    dataset: Option<PathBuf>,
) -> Result<()> {
    let idx =
        IndexStructure::open(index).with_context(|| format!("opening {}", index.display()))?;
    let q = match (workload, rect) {
        (Some(w), _) => {
            let qid = qid.expect("clap enforces --qid");
            let mut q = load_workload(&w)?
                .into_iter()
                .find(|x| x.qid == qid)
                .with_context(|| format!("no query {qid} in {}", w.display()))?
                .query;
            if let Some(s) = sigma {
                q.sigma = s;
            }
            q
        }
        (None, Some(r)) => {
            let c = parse_floats(&r)?;
            if c.len() != 4 {
                bail!("--rect needs four numbers");
            }
            let v = parse_floats(&vector.expect("clap enforces --vector"))?;
            let Some(sigma) = sigma else {
                bail!("--sigma is required with --rect")
            };
            SpatialVisualRangeQuery::new(Rect::from_coords(c[0], c[1], c[2], c[3])?, v, sigma)?
                .with_exploration(e_s, e_v)?
                .with_seed(seed)
        }
        (None, None) => bail!("pass --rect/--vector/--sigma or --workload/--qid"),
    };
    let out = idx.query(&q)?;
    let ids: Vec<String> = out.ids.iter().map(|i| i.0.to_string()).collect();
    println!("{} result(s): {}", out.ids.len(), ids.join(" "));
    let s = &out.stats;
    println!(
        "pages: rtree {} lsh {} data {} (total {}); simulated time {}",
        s.pages_rtree,
        s.pages_lsh,
        s.pages_data,
        s.total_pages(),
        s.simulated_time
    );
    for (name, n) in &s.intermediate {
        println!("  {name}: {n}");
    }
    if let Some(p) = dataset {
        let ds = load_dataset(&p)?;
        let truth = oracle_query(&ds, &q, q.explore_spatial)?;
        match recall(&truth.extended, &out.ids) {
            Some(r) => println!(
                "recall {r} against {} relevant image(s)",
                truth.extended.len()
            ),
            None => println!("recall undefined: no relevant images"),
        }
    }
    Ok(())
}

fn report(path: &Path, out: Option<PathBuf>) -> Result<()> {
    let r = report_from_file(path).with_context(|| format!("reading {}", path.display()))?;
    match out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            write_summary(&r, fs::File::create(dir.join("summary.csv"))?)?;
            write_lemmas(&r, fs::File::create(dir.join("lemmas.csv"))?)?;
            println!("wrote summary.csv and lemmas.csv to {}", dir.display());
        }
        None => {
            write_summary(&r, std::io::stdout().lock())?;
            println!();
            write_lemmas(&r, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen {
            spec,
            n,
            d,
            out,
            common,
        } => gen(spec, n, d, &out, &common),
        Cmd::Queries {
            dataset,
            group,
            count,
            side,
            sigma,
            first_qid,
            out,
            common,
        } => queries(dataset, group, count, side, sigma, first_qid, &out, &common),
        Cmd::Build {
            dataset,
            kind,
            out,
            common,
        } => build(dataset, kind, &out, &common),
        Cmd::Query {
            index,
            rect,
            vector,
            sigma,
            e_s,
            e_v,
            seed,
            workload,
            qid,
            dataset,
        } => query(
            &index, rect, vector, sigma, e_s, e_v, seed, workload, qid, dataset,
        ),
        Cmd::Bench {
            dataset,
            workload,
            structures,
            groups,
            queries_per_group,
            timing_runs,
            out,
            no_series,
            common,
        } => {
            let mut cfg = common.resolve()?;
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            if workload.is_some() {
                cfg.workload = workload;
            }
            if let Some(s) = structures {
                cfg.structures = s;
            }
            if let Some(g) = groups {
                cfg.groups = g;
            }
            if let Some(n) = queries_per_group {
                cfg.queries_per_group = n;
            }
            if let Some(n) = timing_runs {
                cfg.timing_runs = n;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if no_series {
                cfg.series = false;
            }
            let res = run_benchmark(&cfg)?;
            write_summary(&res.report, std::io::stdout().lock())?;
            for f in &res.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Cmd::Report { report: path, out } => report(&path, out),
    }
}
