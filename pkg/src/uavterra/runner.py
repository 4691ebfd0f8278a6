"""Scenario presets: end-to-end experiment pipelines with CSV outputs.

Each scenario builds its scene from the config, runs one module pipeline
with seeds derived from the master seed, and writes CSV outputs plus an
effective-config echo and a manifest into the output directory.  Results
depend only on (config, seed); the worker count never changes bytes.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from uavterra import seeding
from uavterra.channel import ChannelParams
from uavterra.config import ExperimentConfig
from uavterra.coverage import MODES, density_sweep, write_sweep_csv
from uavterra.errors import ConfigError
from uavterra.geometry import Corridor, Polyline, Region
from uavterra.los_model import (CurveFamily, LosCurveModel,
                                azimuth_correlation, fit_all_families,
                                sample_los_curve, write_curve_csv)
from uavterra.manifest import RunManifest
from uavterra.reconstruct import (HeightField, building_heights, carve,
                                  classify_all, measure_links,
                                  plan_receivers, plan_scan,
                                  reconstruction_error,
                                  write_height_field_csv)
from uavterra.search import (AllowedSpace, SearchProblem, relay_search,
                             search_length_sweep, snr_heatmap,
                             write_search_sweep_csv, write_trace_csv)
from uavterra.terrain import (BuildingSet, generate_buildings,
                              height_distribution_from_dict)
from uavterra.tracking import ParadeScenario, run_parade, write_parade_csv


# --- shared scene builders --------------------------------------------------

def channel_from_config(cfg: ExperimentConfig) -> ChannelParams:
    return ChannelParams(**cfg["channel"])


def core_region(cfg: ExperimentConfig) -> Region:
    r = cfg["region"]
    return Region(0.0, float(r["width_m"]), 0.0, float(r["height_m"]))


def scene_terrain(cfg: ExperimentConfig, seed: int,
                  key: int = 0) -> BuildingSet:
    """Urban cylinder drop on the guarded region around the core."""
    region = core_region(cfg).expand(float(cfg["region"]["guard_margin_m"]))
    bcfg = cfg["buildings"]
    dist = height_distribution_from_dict(bcfg["height"])
    return generate_buildings(region, float(bcfg["density_per_km2"]),
                              float(bcfg["radius_m"]), dist,
                              seed=seeding.derive(seed, seeding.SCENARIO,
                                                  key))


def default_curve(cfg: ExperimentConfig) -> LosCurveModel:
    ccfg = cfg["coverage"]
    return LosCurveModel(CurveFamily.SIGMOID, float(ccfg["curve_a"]),
                         float(ccfg["curve_b"]))


def relay_scene(cfg: ExperimentConfig, rng: np.random.Generator):
    """One random two-user relay scene: a few uniform cylinders and two
    users a random distance apart around the region center."""
    rcfg = cfg["relay"]
    size = float(rcfg["scene_size_m"])
    region = Region(0.0, size, 0.0, size)
    n = int(rcfg["n_buildings"])
    r_lo, r_hi = (float(v) for v in rcfg["radius_range_m"])
    h_lo, h_hi = (float(v) for v in rcfg["height_range_m"])
    b = BuildingSet(region, rng.uniform(0.0, size, n),
                    rng.uniform(0.0, size, n), rng.uniform(r_lo, r_hi, n),
                    rng.uniform(h_lo, h_hi, n))
    d_lo, d_hi = (float(v) for v in rcfg["user_distance_range_m"])
    d = rng.uniform(d_lo, d_hi)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    center = np.asarray(region.center)
    off = 0.5 * d * np.array([np.cos(phi), np.sin(phi)])
    users = np.array([[*(center + off), 1.5], [*(center - off), 1.5]])
    z_lo, z_hi = (float(v) for v in rcfg["z_bounds_m"])
    return b, users, AllowedSpace(region, z_lo, z_hi)


def parade_routes(cfg: ExperimentConfig):
    tcfg = cfg["tracking"]
    return Polyline(tcfg["route_a"]), Polyline(tcfg["route_b"])


def parade_corridor(cfg: ExperimentConfig) -> Corridor:
    return Corridor(list(parade_routes(cfg)),
                    width=float(cfg["reconstruct"]["corridor_width_m"]))


def parade_scenario_from_config(cfg: ExperimentConfig) -> ParadeScenario:
    t = cfg["tracking"]
    route_a, route_b = parade_routes(cfg)
    return ParadeScenario(route_a=route_a, route_b=route_b,
                          pace=float(t["pace_m_per_slot"]),
                          slots=int(t["slots"]),
                          crowd_size_mean=float(t["crowd_size_mean"]),
                          crowd_spread=float(t["crowd_spread_m"]),
                          jitter=float(t["jitter_m"]),
                          uav_altitude_bounds=tuple(
                              float(x) for x in t["altitude_bounds_m"]))


def _extended_route(line: Polyline, margin: float) -> Polyline:
    """The polyline prolonged by ``margin`` beyond both endpoints."""
    pts = np.asarray(line.points, dtype=float)
    head = pts[0] - pts[1]
    tail = pts[-1] - pts[-2]
    head = pts[0] + margin * head / np.linalg.norm(head)
    tail = pts[-1] + margin * tail / np.linalg.norm(tail)
    return Polyline(np.vstack([head, pts, tail]))


def _inflated_corridor(corridor: Corridor, margin: float,
                       extension: float = None) -> Corridor:
    """Corridor widened by ``margin`` per side, routes prolonged by
    ``extension`` (default ``margin``) past both endpoints."""
    if extension is None:
        extension = margin
    lines = corridor.lines
    if extension > 0:
        lines = [_extended_route(line, extension) for line in lines]
    return Corridor(lines, width=corridor.width + 2.0 * max(margin, 0.0))


def build_height_field(cfg: ExperimentConfig, b: BuildingSet,
                       corridor: Corridor, seed: int):
    """Corridor scan, power-based link classification, and carving.

    The scan pattern covers the corridor plus ``scan_margin_m`` on every
    side, so buildings bordering the corridor are swept too; receivers
    spread over a ``receiver_band_m`` wide strip around the routes, like
    the crowd they stand in for.
    """
    rcfg = cfg["reconstruct"]
    cp = channel_from_config(cfg)
    margin = float(rcfg["scan_margin_m"])
    # Overshoot the route ends by the swept half width so buildings just
    # past an endpoint still get overflown.
    scan_area = _inflated_corridor(
        corridor, margin, extension=0.5 * corridor.width + margin)
    scan = plan_scan(scan_area,
                     [float(a) for a in rcfg["scan_altitudes_m"]],
                     float(rcfg["scan_spacing_m"]))
    rx_band = Corridor(corridor.lines, width=float(rcfg["receiver_band_m"]))
    receivers = plan_receivers(rx_band, float(rcfg["receiver_spacing_m"]))
    rng = seeding.stream(seed, seeding.RECONSTRUCT, 0)
    measurements = measure_links(scan, receivers, b, cp, rng,
                                 max_range=float(rcfg["max_range_m"]),
                                 fading_avg=int(rcfg["fading_avg"]))
    states = classify_all(measurements, cp)
    hf = HeightField(b.region, float(rcfg["cell_m"]))
    report = carve(measurements, hf, cp, states=states,
                   sample_step=float(rcfg["sample_step_m"]))
    return hf, measurements, report


# --- scenarios --------------------------------------------------------------

def run_fig4_losfit(cfg, out_dir, seed, timings):
    lcfg = cfg["losfit"]
    core = core_region(cfg)
    outputs = []
    fits_rows = []
    scene0 = None
    t0 = time.perf_counter()
    for k in range(int(lcfg["seeds"])):
        b = scene_terrain(cfg, seed, key=k)
        scene0 = scene0 or b
        samples = sample_los_curve(
            b, float(lcfg["uav_height_m"]), int(lcfg["n_pairs"]),
            float(lcfg["bin_width_deg"]),
            rng_seed=seeding.derive(seed, seeding.LOS_SAMPLE, k),
            region=core)
        models = fit_all_families(samples,
                                  min_trials=int(lcfg["min_trials"]))
        for fam in CurveFamily:
            m = models[fam]
            fits_rows.append((k, fam.value, m.a, m.b, m.mse))
        if k == 0:
            curve_path = out_dir / "los_curve.csv"
            write_curve_csv(samples, curve_path)
            outputs.append(curve_path)
    timings["sample_and_fit"] = time.perf_counter() - t0

    fits_path = out_dir / "los_fits.csv"
    with open(fits_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "family", "a", "b", "mse"])
        for row in fits_rows:
            w.writerow([row[0], row[1], f"{row[2]:.6g}", f"{row[3]:.6g}",
                        f"{row[4]:.6g}"])
    outputs.append(fits_path)

    acfg = lcfg["azimuth"]
    t0 = time.perf_counter()
    az = azimuth_correlation(
        scene0, float(acfg["theta0_deg"]),
        [float(x) for x in acfg["bins_deg"]], int(acfg["n_pairs"]),
        rng_seed=seeding.derive(seed, seeding.LOS_AZIMUTH, 0),
        uav_height=float(lcfg["uav_height_m"]), region=core)
    timings["azimuth"] = time.perf_counter() - t0
    az_path = out_dir / "los_azimuth.csv"
    with open(az_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["theta0_deg", "p_uncond", "azimuth_deg", "p_cond",
                    "n_cond", "low_confidence"])
        for s in az.samples:
            w.writerow([f"{az.theta0_deg:g}", f"{az.p_uncond:.6f}",
                        f"{s.azimuth_deg:g}", f"{s.p_cond:.6f}", s.n_cond,
                        int(s.low_confidence)])
    outputs.append(az_path)
    return outputs


def run_fig6_coverage(cfg, out_dir, seed, timings):
    ccfg = cfg["coverage"]
    b = scene_terrain(cfg, seed, key=0)
    t0 = time.perf_counter()
    table = density_sweep(
        densities=[float(d) for d in ccfg["densities_per_km2"]],
        altitude=float(ccfg["uav_height_m"]),
        thresholds=[float(t) for t in ccfg["thresholds_db"]],
        modes=MODES, buildings=b, curve=default_curve(cfg),
        user_region=core_region(cfg), trials=int(ccfg["trials"]),
        seed=seeding.derive(seed, seeding.COVERAGE_GEOM),
        users_per_trial=int(ccfg["users_per_trial"]),
        cp=channel_from_config(cfg), workers=int(cfg["workers"]))
    timings["sweep"] = time.perf_counter() - t0
    sweep_path = out_dir / "coverage_sweep.csv"
    write_sweep_csv(table, sweep_path)
    argmax_path = out_dir / "coverage_argmax.csv"
    with open(argmax_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "threshold_db", "argmax_density_per_km2"])
        for (mode, thr), dens in sorted(table.argmax.items()):
            w.writerow([mode, f"{thr:g}", f"{dens:g}"])
    return [sweep_path, argmax_path]


def run_fig7_relay(cfg, out_dir, seed, timings):
    rcfg = cfg["relay"]
    cp = channel_from_config(cfg)
    rows = []
    trace0 = None
    t0 = time.perf_counter()
    for i in range(int(rcfg["n_scenes"])):
        rng = seeding.stream(seed, seeding.SEARCH, i)
        b, users, space = relay_scene(cfg, rng)
        p = SearchProblem(served=users, space=space,
                          budget=float(rcfg["budget_m"]),
                          granularity=float(rcfg["granularity_m"]),
                          channel=cp)
        start = np.append(users[:, :2].mean(axis=0), space.z_max)
        trace = relay_search(p, b, start)
        trace0 = trace0 or trace
        hm = snr_heatmap(p, b, float(rcfg["grid_step_m"]))
        grid_best = float(np.nanmax(hm.values))
        best = trace.best
        rows.append((i, best.min_snr_db, grid_best,
                     grid_best - best.min_snr_db, trace.path_length,
                     len(trace.probes)))
    timings["scenes"] = time.perf_counter() - t0
    gaps_path = out_dir / "relay_gaps.csv"
    with open(gaps_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scene", "search_min_snr_db", "grid_min_snr_db",
                    "gap_db", "path_length_m", "n_probes"])
        for row in rows:
            w.writerow([row[0], f"{row[1]:.4f}", f"{row[2]:.4f}",
                        f"{row[3]:.4f}", f"{row[4]:.2f}", row[5]])
    trace_path = out_dir / "relay_trace_scene0.csv"
    write_trace_csv(trace0, trace_path)
    return [gaps_path, trace_path]


def run_fig8_sweep(cfg, out_dir, seed, timings):
    scfg = cfg["sweep"]
    size = float(scfg["region_size_m"])
    region = Region(0.0, size, 0.0, size)
    bcfg = cfg["buildings"]
    b = generate_buildings(region, float(bcfg["density_per_km2"]),
                           float(bcfg["radius_m"]),
                           height_distribution_from_dict(bcfg["height"]),
                           seed=seeding.derive(seed, seeding.SCENARIO, 8))
    z_lo, z_hi = (float(v) for v in scfg["z_bounds_m"])
    t0 = time.perf_counter()
    result = search_length_sweep(
        [float(x) for x in scfg["budgets_m"]], b,
        AllowedSpace(region, z_lo, z_hi), default_curve(cfg),
        seed=seeding.derive(seed, seeding.SWEEP, 8),
        user_density_per_km2=float(scfg["user_density_per_km2"]),
        uav_density_per_km2=float(scfg["uav_density_per_km2"]),
        granularity=float(scfg["granularity_m"]),
        threshold_db=float(scfg["threshold_db"]),
        cp=channel_from_config(cfg))
    timings["sweep"] = time.perf_counter() - t0
    path = out_dir / "search_sweep.csv"
    write_search_sweep_csv(result, path)
    return [path]


def run_reconstruct_demo(cfg, out_dir, seed, timings):
    cp = channel_from_config(cfg)
    b = scene_terrain(cfg, seed, key=0)
    corridor = parade_corridor(cfg)
    t0 = time.perf_counter()
    hf, measurements, report = build_height_field(cfg, b, corridor, seed)
    timings["scan_and_carve"] = time.perf_counter() - t0
    # Cell MAEs split at the swept boundary (route corridor plus scan
    # margin); a narrower mask would count freshly scanned cells as
    # "far".  Building detection counts stay on the route corridor.
    swept = _inflated_corridor(corridor,
                               float(cfg["reconstruct"]["scan_margin_m"]),
                               extension=0.0)
    err_cells = reconstruction_error(hf, b, swept)
    err_blds = reconstruction_error(hf, b, corridor)
    ests = building_heights(hf, b)

    field_path = out_dir / "height_field.csv"
    write_height_field_csv(hf, field_path)

    bx, by, br, bh = b.packed()
    near = corridor.distance_to(np.column_stack([bx, by])) <= (
        0.5 * corridor.width + br)
    blds_path = out_dir / "recon_buildings.csv"
    with open(blds_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["building", "x_m", "y_m", "radius_m", "truth_height_m",
                    "lower_m", "upper_m", "est_height_m", "detected",
                    "near"])
        for i, est in enumerate(ests):
            upper = "inf" if np.isinf(est.upper) else f"{est.upper:.3f}"
            height = ("nan" if np.isnan(est.height)
                      else f"{est.height:.3f}")
            w.writerow([i, f"{bx[i]:.3f}", f"{by[i]:.3f}", f"{br[i]:.3f}",
                        f"{bh[i]:.3f}", f"{est.lower:.3f}", upper, height,
                        int(est.detected), int(near[i])])

    summary_path = out_dir / "recon_summary.csv"
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mae_near_m", "mae_far_m", "near_total", "far_total",
                    "near_undetected", "far_undetected", "n_links",
                    "n_los", "n_nlos", "discarded_votes", "unresolved"])
        w.writerow([f"{err_cells.mae_near:.4f}", f"{err_cells.mae_far:.4f}",
                    err_blds.near_total, err_blds.far_total,
                    err_blds.near_undetected, err_blds.far_undetected,
                    len(measurements), report.n_los, report.n_nlos,
                    report.discarded_votes, report.unresolved])
    return [field_path, blds_path, summary_path]


def run_fig2_track(cfg, out_dir, seed, timings):
    tcfg = cfg["tracking"]
    cp = channel_from_config(cfg)
    b = scene_terrain(cfg, seed, key=0)
    corridor = parade_corridor(cfg)
    t0 = time.perf_counter()
    hf, _, _ = build_height_field(cfg, b, corridor, seed)
    timings["reconstruct"] = time.perf_counter() - t0
    scenario = parade_scenario_from_config(cfg)
    cell = float(cfg["reconstruct"]["cell_m"])
    maps = (("reconstructed", hf),
            ("truth", HeightField.from_buildings(b.region, b, cell)),
            ("blank", HeightField(b.region, cell)))
    n_seeds = int(tcfg["map_seeds"])
    outputs = []
    summary = []
    t0 = time.perf_counter()
    for name, field in maps:
        # Crowd draw k is shared across maps so the comparison is paired.
        fractions = []
        for k in range(n_seeds):
            res = run_parade(scenario, field, b, cp,
                             seeding.stream(seed, seeding.TRACKING, k),
                             step_budget=float(tcfg["step_budget_m"]),
                             start_altitude=float(tcfg["start_altitude_m"]),
                             sample_step=float(tcfg["plan_sample_step_m"]))
            fractions.append(res.los_matrix())
            if k == 0:
                path = out_dir / f"parade_{name}.csv"
                write_parade_csv(res, path)
                outputs.append(path)
        fractions = np.asarray(fractions)
        slot_means = fractions.mean(axis=(0, 2))
        summary.append((name, float(fractions.mean()),
                        float(slot_means.min())))
    timings["parade_runs"] = time.perf_counter() - t0
    summary_path = out_dir / "parade_summary.csv"
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["map", "mean_los_fraction", "worst_slot_los_fraction"])
        for name, mean_los, min_los in summary:
            w.writerow([name, f"{mean_los:.6f}", f"{min_los:.6f}"])
    outputs.append(summary_path)
    return outputs


SCENARIOS = {
    "fig2_track": run_fig2_track,
    "fig4_losfit": run_fig4_losfit,
    "fig6_coverage": run_fig6_coverage,
    "fig7_relay": run_fig7_relay,
    "fig8_sweep": run_fig8_sweep,
    "reconstruct_demo": run_reconstruct_demo,
}


def run_scenario(name: str, cfg: ExperimentConfig, out_dir,
                 seed=None) -> RunManifest:
    """Run one scenario end to end and write outputs plus a manifest."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{name}'; choose from "
                          f"{sorted(SCENARIOS)}")
    seed = int(cfg["master_seed"]) if seed is None else int(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    outputs = list(SCENARIOS[name](cfg, out_dir, seed, timings))
    timings["total"] = time.perf_counter() - t0
    cfg_path = out_dir / "effective_config.yaml"
    cfg_path.write_text(cfg.to_yaml())
    outputs.append(cfg_path)
    man = RunManifest.create(name, seed, cfg.sha256, outputs, timings)
    man.write(out_dir)
    return man
