//! The subcommands. Each writes under `<out>/<command>/` and returns the
//! paths it wrote, in a fixed order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use qvsec::cluster::{elbow, kmeans, order_clusters, row_display_order, FeatureMatrix};
use qvsec::network::{parse_native_case, parse_standard_case_with_warnings, BusKind, Network};
use qvsec::powerflow::{solve as solve_pf, PowerFlowSolution};
use qvsec::qv::{batch_qv, QvCurve};
use qvsec::scenario::{run_scan, ZoneDelta};

use crate::config::{hex, RunConfig};
use crate::report::svg::{self, Heatmap};
use crate::report::tables::{self, opt, strings, write_csv};
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub net: Network,
    pub case_sha256: String,
    pub config_sha256: String,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Context, CliError> {
        let path = cfg.case_path().to_path_buf();
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let net = load_case(&path, &bytes)?;
        Ok(Context {
            case_sha256: hex(&Sha256::digest(&bytes)),
            config_sha256: cfg.hash(&bytes),
            cfg,
            net,
        })
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.cfg.out.join(sub)
    }

    fn make_dir(&self, sub: &str) -> Result<PathBuf, CliError> {
        let d = self.dir(sub);
        std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        Ok(d)
    }

    fn base(&self) -> Result<PowerFlowSolution, CliError> {
        let sol = solve_pf(&self.net, &self.cfg.solver, None).map_err(|e| CliError::Config(e.to_string()))?;
        if !sol.converged {
            return Err(CliError::NonConvergence(format!(
                "base case: {:?} after {} iterations, max mismatch {:.3e} p.u.",
                sol.status, sol.iterations, sol.max_mismatch
            )));
        }
        Ok(sol)
    }

    /// Requested buses, or every study bus when none are given. Slack and
    /// unknown buses are dropped with a warning.
    fn buses(&self, requested: &[u32]) -> Vec<u32> {
        let chosen: Vec<u32> = if !requested.is_empty() {
            requested.to_vec()
        } else if !self.cfg.qv.buses.is_empty() {
            self.cfg.qv.buses.clone()
        } else {
            self.cfg.zones.study_buses(&self.net)
        };
        chosen
            .into_iter()
            .filter(|b| match self.net.bus(*b) {
                None => {
                    log::warn!("bus {b} is not in the case; skipped");
                    false
                }
                Some(bus) if bus.kind == BusKind::Slack => {
                    log::warn!("bus {b} is the slack bus; skipped");
                    false
                }
                Some(_) => true,
            })
            .collect()
    }
}

fn load_case(path: &Path, bytes: &[u8]) -> Result<Network, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "m") {
        parse_standard_case_with_warnings(text).map(|(net, warnings)| {
            for w in warnings {
                log::warn!("{}: {w}", path.display());
            }
            net
        })
    } else {
        parse_native_case(text)
    };
    parsed.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_toml<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("report structures serialize")
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    case: &'a str,
    converged: bool,
    status: String,
    iterations: usize,
    switch_rounds: usize,
    max_mismatch_pu: f64,
    generators_at_limit: Vec<usize>,
}

pub fn solve(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let net = &ctx.net;
    let sol = solve_pf(net, &ctx.cfg.solver, None).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = ctx.make_dir("solve")?;
    let mut written = Vec::new();

    let rows: Vec<Vec<String>> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            vec![
                b.id.to_string(),
                format!("{:?}", b.kind).to_lowercase(),
                b.zone.to_string(),
                b.base_kv.to_string(),
                sol.v_mag[i].to_string(),
                sol.v_ang[i].to_degrees().to_string(),
            ]
        })
        .collect();
    let p = dir.join("buses.csv");
    write_csv(&p, &strings(&["bus", "kind", "zone", "base_kv", "v_mag_pu", "v_ang_deg"]), &rows)?;
    written.push(p);

    let rows: Vec<Vec<String>> = net
        .generators
        .iter()
        .enumerate()
        .map(|(g, gen)| {
            vec![
                g.to_string(),
                gen.bus.to_string(),
                sol.gen_p[g].to_string(),
                sol.gen_q[g].to_string(),
                gen.q_min.to_string(),
                gen.q_max.to_string(),
                format!("{:?}", sol.gen_state[g]),
            ]
        })
        .collect();
    let p = dir.join("generators.csv");
    write_csv(
        &p,
        &strings(&["generator", "bus", "p_mw", "q_mvar", "q_min_mvar", "q_max_mvar", "state"]),
        &rows,
    )?;
    written.push(p);

    let summary = SolveSummary {
        case: &net.name,
        converged: sol.converged,
        status: format!("{:?}", sol.status),
        iterations: sol.iterations,
        switch_rounds: sol.switch_rounds,
        max_mismatch_pu: sol.max_mismatch,
        generators_at_limit: sol.gen_at_limit(),
    };
    let p = dir.join("summary.toml");
    write_text(&p, &to_toml(&summary))?;
    written.push(p);

    println!(
        "{}: {} in {} iterations, max mismatch {:.3e} p.u.",
        net.name,
        if sol.converged { "converged" } else { "NOT converged" },
        sol.iterations,
        sol.max_mismatch
    );
    println!("{:>6} {:>10} {:>10}", "bus", "V (p.u.)", "ang (deg)");
    for (i, b) in net.buses.iter().enumerate() {
        println!("{:>6} {:>10.5} {:>10.4}", b.id, sol.v_mag[i], sol.v_ang[i].to_degrees());
    }
    if !sol.converged {
        return Err(CliError::NonConvergence(format!("{:?}", sol.status)));
    }
    Ok(written)
}

fn rrb_text(c: &QvCurve) -> String {
    c.rrb
        .iter()
        .map(|e| format!("{}@{}", e.generator, e.v_set))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn qv(ctx: &Context, requested: &[u32]) -> Result<Vec<PathBuf>, CliError> {
    let base = ctx.base()?;
    let buses = ctx.buses(requested);
    let curves = batch_qv(&ctx.net, &base, &buses, &ctx.cfg.sweep_options());
    let dir = ctx.make_dir("qv")?;
    let mut written = Vec::new();
    let mut rows = Vec::new();
    for (bus, curve) in &curves {
        let zone = ctx.net.bus(*bus).map(|b| b.zone).unwrap_or_default();
        match curve {
            Ok(c) => {
                if ctx.cfg.report.csv {
                    let p = dir.join(format!("bus_{bus}.csv"));
                    tables::write_curve(&p, &c.points)?;
                    written.push(p);
                }
                if ctx.cfg.report.svg {
                    let p = dir.join(format!("bus_{bus}.svg"));
                    write_text(&p, &svg::qv_plot(*bus, &c.points, &ctx.config_sha256))?;
                    written.push(p);
                }
                rows.push(vec![
                    bus.to_string(),
                    zone.to_string(),
                    c.q_margin.to_string(),
                    c.v_nose.to_string(),
                    c.collapse_detected.to_string(),
                    c.rrb.len().to_string(),
                    rrb_text(c),
                    String::new(),
                ]);
                log::info!("bus {bus}: margin {:.2} MVAr, nose {:.4} p.u.", c.q_margin, c.v_nose);
            }
            Err(e) => {
                log::warn!("bus {bus}: {e}");
                rows.push(vec![
                    bus.to_string(),
                    zone.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]);
            }
        }
    }
    let p = dir.join("margins.csv");
    write_csv(
        &p,
        &strings(&["bus", "zone", "q_margin_mvar", "v_nose_pu", "collapse_detected", "rrb_size", "rrb", "error"]),
        &rows,
    )?;
    written.push(p);
    Ok(written)
}

#[derive(Serialize)]
struct ScanManifest<'a> {
    config_sha256: &'a str,
    case_sha256: &'a str,
    case: String,
    policy: &'a str,
    pv_q_limit_scale: f64,
    seed: u64,
    study_buses: &'a [u32],
    notes: &'a [String],
    cases: Vec<ManifestCase>,
}

#[derive(Serialize)]
struct ManifestCase {
    label: String,
    branch_id: usize,
    scheme: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_set_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_factor: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    detail: String,
}

pub fn scan(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    ctx.base()?;
    let net = &ctx.net;
    let branches = ctx.cfg.branch_refs(net);
    if branches.is_empty() {
        return Err(CliError::Config("branch selection is empty".into()));
    }
    let result = run_scan(
        net,
        &branches,
        &ctx.cfg.scan.scheme.schemes(),
        &ctx.cfg.zones,
        &ctx.cfg.sweep_options(),
        &ctx.cfg.scenario_options(),
    )
    .map_err(|e| match e {
        qvsec::Error::BaseNotConverged => CliError::NonConvergence(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    for n in &result.notes {
        log::warn!("{n}");
    }
    let dir = ctx.make_dir("scan")?;
    let mut written = Vec::new();

    let zones: Vec<u32> = result.base.margins.zone_margin.keys().copied().collect();
    let zone_label = |z: u32| net.zone_label(z).map_or_else(|| format!("zone {z}"), str::to_string);
    let mut header = strings(&tables::SCAN_FIXED);
    header.extend(zones.iter().map(|&z| zone_label(z)));
    let mut rows = Vec::new();
    let mut cases = Vec::new();
    for case in &result.cases {
        let br = &net.branches[case.branch_id - 1];
        let (status, detail, deltas): (&str, String, Vec<String>) = match &case.outcome {
            Ok(r) if r.feasible => (
                "ok",
                String::new(),
                zones
                    .iter()
                    .map(|z| opt(r.zone_delta_pct.get(z).and_then(ZoneDelta::pct)))
                    .collect(),
            ),
            Ok(_) => ("infeasible", "scenario base point did not converge".into(), vec![String::new(); zones.len()]),
            Err(e) => ("error", e.clone(), vec![String::new(); zones.len()]),
        };
        let mut row = vec![
            case.label.clone(),
            case.branch_id.to_string(),
            br.from_bus.to_string(),
            br.to_bus.to_string(),
            case.scheme.to_string(),
            status.to_string(),
            detail.clone(),
        ];
        row.extend(deltas);
        rows.push(row);
        let link = case.outcome.as_ref().ok().and_then(|r| r.link);
        cases.push(ManifestCase {
            label: case.label.clone(),
            branch_id: case.branch_id,
            scheme: case.scheme.to_string(),
            status: status.to_string(),
            p_set_mw: link.map(|l| l.p_set),
            loss_factor: link.map(|l| l.loss_factor),
            detail,
        });
    }
    let p = dir.join("scan.csv");
    write_csv(&p, &header, &rows)?;
    written.push(p);

    let mut margin_rows = vec![];
    for (z, m) in &result.base.margins.zone_margin {
        margin_rows.push(vec!["base".to_string(), zone_label(*z), m.to_string()]);
    }
    for case in &result.cases {
        if let Some(r) = case.feasible() {
            for (z, m) in &r.zone_margin {
                margin_rows.push(vec![case.label.clone(), zone_label(*z), m.to_string()]);
            }
        }
    }
    let p = dir.join("zone_margins.csv");
    write_csv(&p, &strings(&["case", "zone", "q_margin_mvar"]), &margin_rows)?;
    written.push(p);

    let manifest = ScanManifest {
        config_sha256: &ctx.config_sha256,
        case_sha256: &ctx.case_sha256,
        case: ctx.cfg.case_path().display().to_string(),
        policy: "from_base_flow",
        pv_q_limit_scale: ctx.cfg.scan.pv_q_limit_scale,
        seed: ctx.cfg.cluster.seed,
        study_buses: &result.base.buses,
        notes: &result.notes,
        cases,
    };
    let p = dir.join("manifest.toml");
    write_text(&p, &to_toml(&manifest))?;
    written.push(p);
    Ok(written)
}

/// One clustering run: which scan rows went in and what came out.
pub struct ClusterGroup {
    pub name: String,
    pub k: usize,
    pub cases: Vec<String>,
    pub zones: Vec<String>,
    pub assignment: Vec<usize>,
    /// Cluster display rank per case.
    pub rank: Vec<usize>,
    pub groups: Vec<usize>,
}

pub fn cluster(ctx: &Context, scan_csv: &Path) -> Result<Vec<PathBuf>, CliError> {
    let table = tables::read_scan(scan_csv)?;
    let dir = ctx.make_dir("cluster")?;
    let cc = ctx.cfg.cluster;
    let families: Vec<(String, Vec<usize>)> = if cc.joint {
        vec![("joint".into(), (0..table.rows.len()).collect())]
    } else {
        let mut by: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in table.rows.iter().enumerate() {
            by.entry(r.scheme.clone()).or_default().push(i);
        }
        by.into_iter().collect()
    };
    let mut written = Vec::new();
    for (name, members) in families {
        let ok: Vec<usize> = members.into_iter().filter(|&i| table.rows[i].status == "ok").collect();
        if ok.is_empty() {
            log::warn!("{name}: no feasible cases to cluster");
            continue;
        }
        let cols: Vec<usize> = (0..table.zones.len())
            .filter(|&j| {
                let defined = ok.iter().all(|&i| table.rows[i].deltas[j].is_some());
                if !defined {
                    log::warn!("{name}: zone {} has undefined deltas and is left out", table.zones[j]);
                }
                defined
            })
            .collect();
        if cols.is_empty() {
            log::warn!("{name}: no zone has a defined delta");
            continue;
        }
        let features = FeatureMatrix::new(
            ok.iter().map(|&i| table.rows[i].case.clone()).collect(),
            cols.iter().map(|&j| table.zones[j].clone()).collect(),
            ok.iter()
                .map(|&i| cols.iter().map(|&j| table.rows[i].deltas[j].unwrap()).collect())
                .collect(),
        )
        .map_err(|e| CliError::Parse(format!("{}: {e}", scan_csv.display())))?;
        let k = if cc.k > features.n_rows() {
            log::warn!("{name}: k = {} exceeds the {} cases; using k = {}", cc.k, features.n_rows(), features.n_rows());
            features.n_rows()
        } else {
            cc.k
        };
        let model = kmeans(&features, k, cc.seed, cc.max_iter, cc.tol).map_err(|e| CliError::Config(e.to_string()))?;
        let order = order_clusters(&model);
        let mut rank = vec![0; k];
        for (r, &c) in order.iter().enumerate() {
            rank[c] = r;
        }
        let (display, sizes) = row_display_order(&model);

        if ctx.cfg.report.csv {
            let rows: Vec<Vec<String>> = display
                .iter()
                .map(|&i| {
                    vec![
                        features.rows[i].clone(),
                        rank[model.assignment[i]].to_string(),
                        model.assignment[i].to_string(),
                    ]
                })
                .collect();
            let p = dir.join(format!("membership_{name}.csv"));
            write_csv(&p, &strings(&["case", "cluster", "kmeans_index"]), &rows)?;
            written.push(p);

            let mut header = strings(&["cluster", "size"]);
            header.extend(features.cols.iter().cloned());
            let rows: Vec<Vec<String>> = order
                .iter()
                .enumerate()
                .map(|(r, &c)| {
                    let mut row = vec![r.to_string(), model.assignment.iter().filter(|&&a| a == c).count().to_string()];
                    row.extend(model.centroids[c].iter().map(|v| v.to_string()));
                    row
                })
                .collect();
            let p = dir.join(format!("centroids_{name}.csv"));
            write_csv(&p, &header, &rows)?;
            written.push(p);

            let curve = elbow(&features, cc.elbow_k_max, cc.seed, cc.max_iter, cc.tol)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let rows: Vec<Vec<String>> = curve.iter().map(|(k, i)| vec![k.to_string(), i.to_string()]).collect();
            let p = dir.join(format!("elbow_{name}.csv"));
            write_csv(&p, &strings(&["k", "inertia"]), &rows)?;
            written.push(p);
        }
        if ctx.cfg.report.svg {
            let col_labels: Vec<String> = display.iter().map(|&i| features.rows[i].clone()).collect();
            let values: Vec<Vec<f64>> = (0..features.n_cols())
                .map(|j| display.iter().map(|&i| features.values[i][j]).collect())
                .collect();
            let title = format!("Zone Q-margin change vs base, {name} (k = {k}, seed {})", cc.seed);
            let p = dir.join(format!("heatmap_{name}.svg"));
            write_text(
                &p,
                &svg::heatmap(
                    &Heatmap {
                        title: &title,
                        row_labels: &features.cols,
                        col_labels: &col_labels,
                        values: &values,
                        groups: &sizes,
                        limit_pct: ctx.cfg.report.heatmap_limit_pct,
                    },
                    &ctx.config_sha256,
                ),
            )?;
            written.push(p);
        }
        log::info!("{name}: {} cases in {k} clusters, inertia {:.4}", features.n_rows(), model.inertia);
    }
    Ok(written)
}

pub fn scatter(ctx: &Context, requested: &[u32]) -> Result<Vec<PathBuf>, CliError> {
    let base = ctx.base()?;
    let buses = ctx.buses(requested);
    let curves = batch_qv(&ctx.net, &base, &buses, &ctx.cfg.sweep_options());
    let points: Vec<(u32, f64, f64)> = curves
        .iter()
        .filter_map(|(b, c)| c.as_ref().ok().map(|c| (*b, c.v_nose, -c.q_margin)))
        .collect();
    let dir = ctx.make_dir("scatter")?;
    let mut written = Vec::new();
    if ctx.cfg.report.csv {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|(b, v, q)| vec![b.to_string(), v.to_string(), q.to_string()])
            .collect();
        let p = dir.join("scatter.csv");
        write_csv(&p, &strings(&["bus", "v_nose_pu", "max_extractable_q_mvar"]), &rows)?;
        written.push(p);
    }
    if ctx.cfg.report.svg {
        let p = dir.join("scatter.svg");
        write_text(&p, &svg::scatter(&points, &ctx.config_sha256))?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Serialize)]
struct PipelineManifest<'a> {
    tool: String,
    config_sha256: &'a str,
    case: String,
    case_sha256: &'a str,
    seed: u64,
    k: usize,
    joint: bool,
    config: toml::Table,
    files: Vec<ManifestFile>,
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

pub fn pipeline(ctx: &Context) -> Result<(), CliError> {
    let mut files = solve(ctx)?;
    files.extend(qv(ctx, &[])?);
    files.extend(scan(ctx)?);
    files.extend(cluster(ctx, &ctx.dir("scan").join("scan.csv"))?);
    files.extend(scatter(ctx, &[])?);
    let mut entries = Vec::new();
    for f in &files {
        let bytes = std::fs::read(f).map_err(|e| CliError::io(f, e))?;
        let rel = f.strip_prefix(&ctx.cfg.out).unwrap_or(f);
        entries.push(ManifestFile {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hex(&Sha256::digest(&bytes)),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = PipelineManifest {
        tool: format!("qvsec {}", env!("CARGO_PKG_VERSION")),
        config_sha256: &ctx.config_sha256,
        case: ctx.cfg.case_path().display().to_string(),
        case_sha256: &ctx.case_sha256,
        seed: ctx.cfg.cluster.seed,
        k: ctx.cfg.cluster.k,
        joint: ctx.cfg.cluster.joint,
        config: toml::from_str(&ctx.cfg.canonical_toml()).expect("canonical config parses"),
        files: entries,
    };
    let p = ctx.cfg.out.join("manifest.toml");
    write_text(&p, &to_toml(&manifest))?;
    log::info!("pipeline done: {} files, manifest {}", files.len() + 1, p.display());
    Ok(())
}

pub fn convert(ctx: &Context, to: Option<&Path>) -> Result<(), CliError> {
    let text = qvsec::network::to_native_string(&ctx.net);
    match to {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
