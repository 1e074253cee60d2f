//! Seeded verification batteries behind `bicap suite`.
//!
//! Instance `i` draws from its own stream, so any failing instance replays
//! from `(seed, i)` alone, independent of thread count and of `--count`.

use std::path::Path;

use bicap::bridge::{carleson_test, uniform_grid, BidiscAtom};
use bicap::capacity::{
    capacity_1d, capacity_tree_exact, capacity_with, certify, solve_atomic, AtomicProblem, CapacityProblem, Method,
};
use bicap::gen::{self, Automorphism2};
use bicap::potential::co_hardy_map;
use bicap::rearrange::{quantitative_max_principle, rearrange_2d};
use bicap::sci::{sci_ratio, SubcapStrategy};
use bicap::staircase::{build_staircase, StaircaseConfig};
use bicap::{Node2, NodeSet, SparseFunction, TreeShape};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::{emit, emit_json, input_err, internal, Failure, Flags, Outcome, RunConfig, SuiteName};

fn instance_rng(seed: u64, i: usize) -> impl Rng {
    gen::rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64))
}

/// A failing instance in replayable form.
#[derive(Serialize)]
struct Violation<T: Serialize> {
    suite: &'static str,
    seed: u64,
    instance: usize,
    what: String,
    data: T,
}

fn report_violations<T: Serialize>(found: &[Violation<T>]) -> Outcome {
    if found.is_empty() {
        return Ok(());
    }
    for v in found {
        eprintln!("{}", serde_json::to_string(v).map_err(internal)?);
    }
    Err(Failure::Violation(format!("{} violating instance(s), first: {}", found.len(), found[0].what)))
}

pub fn run(name: SuiteName, flags: &Flags, input: Option<&Path>) -> Outcome {
    let shape = TreeShape::new(flags.depth).map_err(input_err)?;
    if flags.count == 0 {
        return Err(input_err(anyhow::anyhow!("--count must be positive")));
    }
    let config = RunConfig {
        command: format!("suite {}", serde_json::to_value(name).map_err(internal)?.as_str().unwrap_or_default()),
        flags,
        input: input.map(|p| p.display().to_string()),
    };
    match name {
        SuiteName::Sci => sci(shape, flags, &config),
        SuiteName::Rearrange => rearrange(shape, flags, &config),
        SuiteName::Maxprinciple => maxprinciple(shape, flags, &config),
        SuiteName::Carleson => carleson(shape, flags, &config, input),
        SuiteName::Oracles => oracles(shape, flags, &config),
    }
}

/// Sparse random, single nodes, leaf-heavy and `𝕀*ν`, in rotation.
fn sci_instance(shape: TreeShape, i: usize, rng: &mut impl Rng) -> SparseFunction {
    let f = match i % 4 {
        0 => gen::function(shape, rng.gen_range(1..=16), rng),
        1 => SparseFunction::point(shape, gen::node2(shape, rng), 1.0),
        2 => SparseFunction::from_pairs(
            shape,
            (0..rng.gen_range(1..=32)).map(|_| (gen::leaf2(shape, rng), rng.gen::<f64>() + 1e-3)).collect::<Vec<_>>(),
        ),
        _ => gen::boundary_measure(shape, rng.gen_range(1..=8), rng)
            .and_then(|nu| SparseFunction::from_pairs(shape, co_hardy_map(&nu))),
    };
    f.expect("generated within the shape")
}

fn sci(shape: TreeShape, flags: &Flags, config: &RunConfig) -> Outcome {
    let results: Vec<_> = (0..flags.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(flags.seed, i);
            let f = sci_instance(shape, i, &mut rng);
            let g = Automorphism2::random(shape, &mut rng).apply_weights(&f)?;
            let r = sci_ratio(&f, false, flags.tol)?;
            let moved = sci_ratio(&g, false, flags.tol)?.ratio;
            Ok((f, r, moved))
        })
        .collect::<bicap::Result<_>>()
        .map_err(internal)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance-id", "L", "k", "cap_Ek", "term", "cumulative", "norm_sq_f", "ratio"]).map_err(internal)?;
    let l = shape.depth().to_string();
    let mut violations = Vec::new();
    let mut uncertified = 0;
    let mut max = 0.0f64;
    for (i, (f, r, moved)) in results.iter().enumerate() {
        for t in &r.terms {
            w.write_record([
                &i.to_string(),
                &l,
                &t.k.to_string(),
                &t.cap.to_string(),
                &t.term.to_string(),
                &t.cumulative.to_string(),
                &r.norm_sq.to_string(),
                &r.ratio.to_string(),
            ])
            .map_err(internal)?;
        }
        max = max.max(r.ratio);
        if !r.certified {
            uncertified += 1;
        }
        if !r.ratio.is_finite() || (r.ratio - moved).abs() > 1e-10 * r.ratio.max(1.0) {
            violations.push(Violation {
                suite: "sci",
                seed: flags.seed,
                instance: i,
                what: format!("ratio {} vs {} after relabeling", r.ratio, moved),
                data: f.to_atoms(),
            });
        }
    }
    w.write_record(["max", &l, "", "", "", "", "", &max.to_string()]).map_err(internal)?;
    let body = String::from_utf8(w.into_inner().map_err(internal)?).map_err(internal)?;
    let header = serde_json::to_string(config).map_err(internal)?;
    emit(flags.out.as_deref(), &format!("# config: {header}\n{body}"))?;
    report_violations(&violations)?;
    if uncertified > 0 {
        return Err(Failure::NotCertified(format!("{uncertified} instance(s) with uncertified level-set capacities")));
    }
    Ok(())
}

fn rearrange(shape: TreeShape, flags: &Flags, config: &RunConfig) -> Outcome {
    let delta = flags.delta;
    let lambda = flags.lambda.unwrap_or(9.0 * delta);
    #[derive(Serialize)]
    struct Row {
        instance: usize,
        mass: f64,
        exceedance: usize,
        min_hardy: f64,
        norm_sq: f64,
        constant: f64,
        layers: usize,
    }
    let out: Vec<_> = (0..flags.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(flags.seed, i);
            let raw = gen::boundary_measure(shape, rng.gen_range(1..60), &mut rng)?;
            let mu = raw.scaled(rng.gen_range(0.05..1.0) / raw.total());
            let r = rearrange_2d(&mu, delta, lambda)?;
            Ok((mu, r))
        })
        .collect::<bicap::Result<_>>()
        .map_err(input_err)?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (i, (mu, r)) in out.iter().enumerate() {
        let c = &r.certificates;
        if c.exceedance > 0 && c.min_hardy < lambda - 1e-12 {
            violations.push(Violation {
                suite: "rearrange",
                seed: flags.seed,
                instance: i,
                what: format!("Iφ = {} < λ = {lambda} on the exceedance set", c.min_hardy),
                data: mu.to_atoms(),
            });
        }
        rows.push(Row {
            instance: i,
            mass: mu.total(),
            exceedance: c.exceedance,
            min_hardy: c.min_hardy,
            norm_sq: c.norm_sq,
            constant: c.constant,
            layers: r.layers.len(),
        });
    }
    let max_constant = rows.iter().map(|r| r.constant).fold(0.0, f64::max);
    #[derive(Serialize)]
    struct Out {
        lambda: f64,
        max_constant: f64,
        rows: Vec<Row>,
    }
    emit_json(config, flags.out.as_deref(), Out { lambda, max_constant, rows })?;
    report_violations(&violations)
}

fn maxprinciple(shape: TreeShape, flags: &Flags, config: &RunConfig) -> Outcome {
    let sc = StaircaseConfig::new(flags.base, flags.steps).map_err(input_err)?;
    let staircase = build_staircase(sc).map_err(internal)?;
    let lambda = flags.lambda.unwrap_or(2.0);
    let unions: Vec<_> = (0..flags.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(flags.seed, i);
            let set = NodeSet::exact(shape, gen::boxes(shape, rng.gen_range(1..6), 0, &mut rng))?;
            quantitative_max_principle(&set, lambda, flags.tol)
        })
        .collect::<bicap::Result<_>>()
        .map_err(input_err)?;
    let max_ratio = unions.iter().map(|m| m.ratio).fold(0.0, f64::max);

    let mut violations = Vec::new();
    let max_on_support = staircase.v_on_support.iter().copied().fold(0.0, f64::max);
    if max_on_support > 1.0 + 1e-9 {
        violations.push(format!("equilibrium potential {max_on_support} > 1 on the support"));
    }
    if flags.base == 20 {
        if staircase.v_at_omega < 9.0 / 50.0 * flags.steps as f64 {
            violations.push(format!("V(ω) = {} below 9n/50", staircase.v_at_omega));
        }
        if !staircase.offdiag_within_ninth {
            violations.push("off-diagonal row sum exceeds k/9".into());
        }
    }
    #[derive(Serialize)]
    struct Out {
        staircase: bicap::staircase::Staircase,
        lambda: f64,
        union_max_ratio: f64,
        unions: Vec<bicap::rearrange::MaxPrinciple>,
        violations: Vec<String>,
    }
    let first = violations.first().cloned();
    emit_json(config, flags.out.as_deref(), Out { staircase, lambda, union_max_ratio: max_ratio, unions, violations })?;
    match first {
        Some(m) => Err(Failure::Violation(m)),
        None => Ok(()),
    }
}

fn carleson(shape: TreeShape, flags: &Flags, config: &RunConfig, input: Option<&Path>) -> Outcome {
    let atoms: Vec<BidiscAtom> = match input {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(input_err)?;
            serde_json::from_str(&text).map_err(input_err)?
        }
        None => uniform_grid(shape.depth()),
    };
    let strategy = SubcapStrategy::LevelSetGuided { functions: vec![] };
    let report = carleson_test(&atoms, shape, &strategy, flags.tol).map_err(input_err)?;
    let easy = report.easy_direction;
    let ratio = report.ratio;
    emit_json(config, flags.out.as_deref(), report)?;
    if !easy {
        return Err(Failure::Violation(format!("trace bound fails on the achieving collection (ratio {ratio})")));
    }
    Ok(())
}

fn oracles(shape: TreeShape, flags: &Flags, config: &RunConfig) -> Outcome {
    const REL: f64 = 1e-7;
    #[derive(Serialize)]
    struct Row {
        instance: usize,
        kind: &'static str,
        solver: f64,
        oracle: f64,
        rel_err: f64,
        certified: bool,
    }
    let rows: Vec<(Row, Vec<Node2>)> = (0..flags.count)
        .into_par_iter()
        .map(|i| -> bicap::Result<(Row, Vec<Node2>)> {
            let mut rng = instance_rng(flags.seed, i);
            if i % 2 == 0 {
                let mut pts: Vec<Node2> = (0..rng.gen_range(1..=10)).map(|_| gen::node2(shape, &mut rng)).collect();
                pts.sort();
                pts.dedup();
                let problem = CapacityProblem::new(NodeSet::exact(shape, pts.clone())?).with_tol(flags.tol);
                let r = capacity_with(&problem, Method::Sweep)?;
                let cert = certify(&r, &problem.target)?.holds(1e-6);
                let oracle = solve_atomic(&AtomicProblem::from_points(&pts).gram)?.cap;
                let rel_err = (r.cap - oracle).abs() / oracle;
                Ok((Row { instance: i, kind: "atomic", solver: r.cap, oracle, rel_err, certified: cert }, pts))
            } else {
                let s1 = TreeShape::new(shape.depth().min(bicap::grid::DENSE_LIMIT))?;
                let set = gen::leaf_set1(s1, rng.gen_range(0.05..0.9), &mut rng);
                let oracle = capacity_tree_exact(s1, &set)?.cap;
                let (cap, _, _) = capacity_1d(s1, &set, flags.tol)?;
                let rel_err = if oracle == 0.0 { cap.abs() } else { (cap - oracle).abs() / oracle };
                let pts = set.iter().map(|&x| Node2::new(x, bicap::Node1::root())).collect();
                Ok((Row { instance: i, kind: "tree", solver: cap, oracle, rel_err, certified: true }, pts))
            }
        })
        .collect::<bicap::Result<_>>()
        .map_err(internal)?;
    let mut violations = Vec::new();
    let mut uncertified = 0;
    for (row, pts) in &rows {
        if row.rel_err > REL {
            violations.push(Violation {
                suite: "oracles",
                seed: flags.seed,
                instance: row.instance,
                what: format!("{} solver {} vs oracle {}", row.kind, row.solver, row.oracle),
                data: pts.clone(),
            });
        }
        if !row.certified {
            uncertified += 1;
        }
    }
    #[derive(Serialize)]
    struct Out<'a> {
        max_rel_err: f64,
        violations: usize,
        rows: Vec<&'a Row>,
    }
    let max_rel_err = rows.iter().map(|r| r.0.rel_err).fold(0.0, f64::max);
    emit_json(
        config,
        flags.out.as_deref(),
        Out { max_rel_err, violations: violations.len(), rows: rows.iter().map(|r| &r.0).collect() },
    )?;
    report_violations(&violations)?;
    if uncertified > 0 {
        return Err(Failure::NotCertified(format!("{uncertified} capacity solve(s) failed the KKT check")));
    }
    Ok(())
}
