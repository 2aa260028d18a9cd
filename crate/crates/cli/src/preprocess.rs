use serde::Serialize;

use lgwnn::preprocess::{self, CacheStatus, PreprocessConfig, PreprocessedGraph};

use crate::data::{self, Loaded};
use crate::{CliResult, Dirs, Output, PreprocessArgs};

#[derive(Debug, Serialize)]
struct Summary {
    dataset: String,
    config: PreprocessConfig,
    graphs: usize,
    nodes: usize,
    edges: usize,
    /// Fraction of zero entries in the forward basis, pooled over graphs.
    basis_sparsity: f64,
    smoothness_min: f64,
    smoothness_max: f64,
    odd: usize,
    even: usize,
    cross_edges: usize,
    caches_written: usize,
    caches_up_to_date: usize,
    cache: String,
}

fn accumulate(s: &mut Summary, p: &PreprocessedGraph, zeros: &mut f64, entries: &mut f64) {
    let n = p.num_nodes();
    s.graphs += 1;
    s.nodes += n;
    s.edges += p.graph.num_edges();
    *zeros += (n * n - p.basis.forward.nnz().min(n * n)) as f64;
    *entries += (n * n) as f64;
    for &v in &p.smoothness {
        s.smoothness_min = s.smoothness_min.min(v);
        s.smoothness_max = s.smoothness_max.max(v);
    }
    s.odd += p.split.odd.len();
    s.even += p.split.even.len();
    s.cross_edges += p.split.num_cross_edges();
}

pub fn run(args: &PreprocessArgs, dirs: &Dirs, out: Output) -> CliResult {
    let r = data::dataset_ref(&args.data);
    let cfg = data::preprocess_config(&args.data);
    let loaded = data::load(&r, dirs)?;
    std::fs::create_dir_all(&dirs.cache_dir)?;
    let mut s = Summary {
        dataset: data::cache_name(&r),
        config: cfg,
        graphs: 0,
        nodes: 0,
        edges: 0,
        basis_sparsity: 0.0,
        smoothness_min: f64::INFINITY,
        smoothness_max: f64::NEG_INFINITY,
        odd: 0,
        even: 0,
        cross_edges: 0,
        caches_written: 0,
        caches_up_to_date: 0,
        cache: String::new(),
    };
    let (mut zeros, mut entries) = (0.0, 0.0);
    match loaded {
        Loaded::Node(ds) => {
            let prep = preprocess::prepare_node(&ds, &cfg, Some(&dirs.cache_dir))?;
            accumulate(&mut s, &prep.pre, &mut zeros, &mut entries);
            match prep.status {
                CacheStatus::UpToDate => s.caches_up_to_date = 1,
                _ => s.caches_written = 1,
            }
            s.cache = preprocess::node_cache_path(&dirs.cache_dir, &ds.name).display().to_string();
        }
        Loaded::Graph(ds) => {
            let prep = preprocess::prepare_graphs(&ds, &cfg, Some(&dirs.cache_dir))?;
            for sample in &prep.samples {
                accumulate(&mut s, &sample.pre, &mut zeros, &mut entries);
            }
            s.caches_written = prep.written;
            s.caches_up_to_date = prep.up_to_date;
            s.cache = dirs.cache_dir.join(&ds.name).display().to_string();
        }
    }
    s.basis_sparsity = if entries > 0.0 { zeros / entries } else { 0.0 };

    if out.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else if !out.quiet {
        println!("dataset         {}", s.dataset);
        println!("graphs          {}", s.graphs);
        println!("N               {}", s.nodes);
        println!("edges           {}", s.edges);
        println!("scale           {}", cfg.scale);
        println!("basis threshold {:e}", cfg.basis_threshold);
        println!("basis sparsity  {:.4}", s.basis_sparsity);
        println!("smoothness      [{:.6}, {:.6}]", s.smoothness_min, s.smoothness_max);
        println!("split           {} odd / {} even, {} cross edges", s.odd, s.even, s.cross_edges);
        if s.caches_written == 0 {
            println!("cache up to date: {}", s.cache);
        } else {
            println!("cache written ({} files): {}", s.caches_written, s.cache);
        }
    }
    Ok(())
}
