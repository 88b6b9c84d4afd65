"""Stage orchestration over content-addressed artifact directories.

Each stage writes into ``<out>/<stage>/<hash>/`` where the hash covers the
configuration fields the stage depends on and the hashes of its inputs.  A
stage directory is created atomically (written to a temporary sibling and
renamed) and is reused on later runs unless ``force`` is set.  Timings live
only in ``<out>/manifest.json`` so every stage directory is reproducible byte
for byte.
"""
from __future__ import annotations

import logging
import math
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import geometry, husimi, io, spectra
from .classical import chaotic_grid, transport_time
from .config import STAGES, UPSTREAM, RunConfig
from .errors import BillocError, InsufficientData, MissingArtifact, StageFailed
from .geometry import BilliardShape
from .quantum import SolverOptions, solve_window

log = logging.getLogger(__name__)

DONE = "stage.json"
HIST_EDGES_S = np.linspace(0.0, 4.0, 41)
HIST_BINS_A = 35


def software_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


def lam_tag(lam: float) -> str:
    return f"{lam:.6g}"


@dataclass
class RunManifest:
    config_hash: str
    software_version: str
    stages: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"config_hash": self.config_hash, "software_version": self.software_version, "stages": self.stages}


# --------------------------------------------------------------- job workers

def _solve_job(lam: float, window_id: int, k_lo: float, k_hi: float, half_width: float,
               basis_factor: float, boundary_density: float):
    with threadpool_limits(1):
        opts = SolverOptions(half_width=half_width, basis_factor=basis_factor, boundary_density=boundary_density)
        w = solve_window(BilliardShape(lam), k_lo, k_hi, opts, window_id=window_id)
    return w.levels, w.weyl_expected


def _husimi_job(u_path: str, grid_path: str, dims: tuple[int, int], n_dump: int):
    with threadpool_limits(1):
        records = io.read_boundary_functions(Path(u_path))
        K = io.read_chaotic_grid(Path(grid_path))
        rows, dumps = [], []
        for i, rec in enumerate(records):
            H = husimi.husimi_grid(rec, dims)
            rows.append({
                "k": rec.k,
                "window_id": rec.window_id,
                "A": husimi.entropy_A(H),
                "nIPR": husimi.nipr(H),
                "M": husimi.overlap_index(H, K),
            })
            if i < n_dump:
                dumps.append(H)
    return rows, dumps


def _run_jobs(fn, jobs: list[tuple], threads: int):
    """Run jobs in order; results are returned in job order regardless of pool size."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


# ------------------------------------------------------------------ pipeline

class Pipeline:
    def __init__(self, config: RunConfig, out: Path | str | None = None, threads: int = 1, force: bool = False):
        self.cfg = config
        self.out = Path(out if out is not None else config.out)
        self.threads = max(1, int(threads))
        self.force = force
        self.hashes: dict[str, str] = {}
        for st in STAGES:
            self.hashes[st] = config.stage_hash(st, self.hashes)
        self.manifest = self._load_manifest()

    # ---- layout

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage / self.hashes[stage]

    def is_done(self, stage: str) -> bool:
        return (self.stage_dir(stage) / DONE).exists()

    def _require(self, stage: str) -> Path:
        if not self.is_done(stage):
            raise MissingArtifact(f"stage {stage!r} has no artifacts at {self.stage_dir(stage)}")
        return self.stage_dir(stage)

    def _load_manifest(self) -> RunManifest:
        path = self.out / "manifest.json"
        m = RunManifest(self.cfg.config_hash(), software_version())
        if path.exists():
            old = io.read_json(path)
            if old.get("config_hash") == m.config_hash:
                m.stages = old.get("stages", {})
        return m

    def _save_manifest(self) -> None:
        io.write_json(self.out / "manifest.json", self.manifest.as_dict())

    # ---- execution

    def check_inputs(self, stages) -> None:
        """Every input of a requested stage must exist or be produced earlier in this run."""
        planned = set(stages)
        for st in stages:
            if st == "report":
                continue
            for up in UPSTREAM[st]:
                if up not in planned and not self.is_done(up):
                    raise MissingArtifact(f"stage {st!r} needs {up!r}, which is neither enabled nor on disk")

    def run(self, stages=None) -> RunManifest:
        stages = [s for s in STAGES if s in (stages or self.cfg.stages)]
        self.check_inputs(stages)
        for st in stages:
            self.run_stage(st)
        return self.manifest

    def run_stage(self, stage: str) -> Path:
        final = self.stage_dir(stage)
        if self.is_done(stage) and not self.force:
            log.info("stage %s: reusing %s", stage, final)
            return final
        tmp = final.with_name(final.name + ".tmp")
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        t0 = time.perf_counter()
        fn = getattr(self, "_stage_" + stage.replace("-", "_"))
        try:
            fn(tmp)
        except BillocError as exc:
            shutil.rmtree(tmp, ignore_errors=True)
            raise StageFailed(stage, exc) from exc
        files = sorted(p.relative_to(tmp).as_posix() for p in tmp.rglob("*") if p.is_file())
        io.write_json(tmp / DONE, {"stage": stage, "hash": self.hashes[stage], "files": files})
        shutil.rmtree(final, ignore_errors=True)
        tmp.rename(final)
        self.manifest.stages[stage] = {
            "path": final.relative_to(self.out).as_posix(),
            "hash": self.hashes[stage],
            "seconds": round(time.perf_counter() - t0, 3),
        }
        self._save_manifest()
        log.info("stage %s done in %.1fs -> %s", stage, time.perf_counter() - t0, final)
        return final

    # ---- stages

    def _stage_geometry(self, d: Path) -> None:
        rows = []
        th = np.linspace(0, 2 * np.pi, 20001)
        for lam in self.cfg.lambdas:
            sh = BilliardShape(lam)
            rows.append((lam, sh.perimeter, sh.area, int(sh.convex), float(geometry.curvature(sh, th).min()),
                         sh.symmetry_line_length))
        io.write_csv(d / "geometry.csv",
                     ["lambda", "perimeter", "area", "convex", "min_curvature", "symmetry_line_length"], rows)

    def _stage_transport(self, d: Path) -> None:
        import numba

        numba.set_num_threads(min(self.threads, numba.config.NUMBA_NUM_THREADS))
        rows, summary = [], {}
        for lam in self.cfg.lambdas:
            res = transport_time(
                BilliardShape(lam), self.cfg.ensemble_size, self.cfg.fractions, self.cfg.max_collisions,
                self.cfg.seed, tail_fraction=self.cfg.tail_fraction, slope_threshold=self.cfg.slope_threshold,
            )
            for f, n in sorted(res.n_t_by_criterion.items()):
                rows.append((lam, f, n))
            io.write_csv(d / f"series_{lam_tag(lam)}.csv", ["n", "p2_mean"], enumerate(res.second_moment_series))
            summary[lam_tag(lam)] = {"asymptote": res.asymptote, "ensemble_size": res.ensemble_size,
                                     "max_collisions": self.cfg.max_collisions, "seed": res.seed}
        io.write_csv(d / "transport.csv", ["lambda", "criterion", "N_T"], rows)
        io.write_json(d / "transport.json", summary)

    def _stage_chaotic_grid(self, d: Path) -> None:
        summary = {}
        for lam in self.cfg.lambdas:
            g = chaotic_grid(BilliardShape(lam), self.cfg.chaotic_collisions, self.cfg.grid_dims, self.cfg.seed)
            io.write_chaotic_grid(d / f"grid_{lam_tag(lam)}.bin", g)
            summary[lam_tag(lam)] = {"chi_c": g.chi_c, "start": [g.start.s, g.start.p]}
        io.write_json(d / "chaotic.json", summary)

    def _windows(self):
        return [(lam, i, lo, hi) for lam in self.cfg.lambdas for i, (lo, hi) in enumerate(self.cfg.k_windows)]

    def _stage_solve(self, d: Path) -> None:
        jobs = [(lam, i, lo, hi, self.cfg.half_width, self.cfg.basis_factor, self.cfg.boundary_density)
                for lam, i, lo, hi in self._windows()]
        if not jobs:
            raise InsufficientData("no k windows configured")
        results = _run_jobs(_solve_job, jobs, self.threads)
        by_lam: dict[float, list] = {}
        meta = []
        for (lam, i, lo, hi, *_), (levels, expected) in zip(jobs, results):
            io.write_boundary_functions(d / f"u_{lam_tag(lam)}_w{i}.bin", levels)
            by_lam.setdefault(lam, []).extend(levels)
            meta.append({"lambda": lam, "window_id": i, "k_lo": lo, "k_hi": hi,
                         "n_levels": len(levels), "weyl_expected": expected})
        for lam, levels in by_lam.items():
            io.write_spectrum(d / f"spectrum_{lam_tag(lam)}.csv", levels)
        io.write_json(d / "windows.json", meta)

    def _stage_husimi(self, d: Path) -> None:
        sd = self._require("solve")
        gd = self._require("chaotic-grid")
        jobs = [(str(sd / f"u_{lam_tag(lam)}_w{i}.bin"), str(gd / f"grid_{lam_tag(lam)}.bin"),
                 tuple(self.cfg.grid_dims), self.cfg.husimi_dump)
                for lam, i, _, _ in self._windows()]
        results = _run_jobs(_husimi_job, jobs, self.threads)
        for (lam, i, _, _), (rows, dumps) in zip(self._windows(), results):
            io.write_jsonl(d / f"measures_{lam_tag(lam)}_w{i}.jsonl", rows)
            for j, H in enumerate(dumps):
                io.write_husimi(d / "grids" / f"husimi_{lam_tag(lam)}_w{i}_{j}.bin", H)

    def _measures(self, lam: float) -> list[dict]:
        hd = self._require("husimi")
        rows = []
        for i in range(len(self.cfg.k_windows)):
            rows.extend(io.read_jsonl(hd / f"measures_{lam_tag(lam)}_w{i}.jsonl"))
        return rows

    def _chi_c(self) -> dict[str, float]:
        return {k: v["chi_c"] for k, v in io.read_json(self._require("chaotic-grid") / "chaotic.json").items()}

    def _stage_localize(self, d: Path) -> None:
        chi = self._chi_c()
        summary = {}
        for lam in self.cfg.lambdas:
            rows = self._measures(lam)
            c = chi[lam_tag(lam)]
            out = []
            for r in rows:
                cls = husimi.classify(r["M"], self.cfg.M_t)
                out.append({"k": r["k"], "window_id": r["window_id"], "A": r["A"], "A_normalized": r["A"] / c,
                            "nIPR": r["nIPR"], "M": r["M"], "class": cls})
            io.write_jsonl(d / f"localization_{lam_tag(lam)}.jsonl", out)
            M = [r["M"] for r in rows]
            n_ch = sum(r["class"] == "chaotic" for r in out)
            summary[lam_tag(lam)] = {
                "chi_c": c,
                "M_t": self.cfg.M_t,
                "classical_threshold": husimi.classical_threshold(M, 1.0 - c) if M else None,
                "n_states": len(out),
                "n_chaotic": n_ch,
                "n_regular": len(out) - n_ch,
            }
        io.write_json(d / "localize.json", summary)

    def _stage_spectra_fit(self, d: Path) -> None:
        sd = self._require("solve")
        chi = self._chi_c()
        report = {}
        for lam in self.cfg.lambdas:
            sh = BilliardShape(lam)
            spacings = []
            for i in range(len(self.cfg.k_windows)):
                recs = io.read_boundary_functions(sd / f"u_{lam_tag(lam)}_w{i}.bin")
                ks = np.array([r.k for r in recs])
                if ks.size > 1:
                    spacings.append(np.diff(spectra.unfold_levels(ks, sh)))
            s = np.concatenate(spacings) if spacings else np.empty(0)
            if s.size < self.cfg.min_spacings:
                raise InsufficientData(f"lambda={lam}: {s.size} spacings, need {self.cfg.min_spacings}")
            rho1 = 1.0 - chi[lam_tag(lam)]
            fits = {
                "brody": spectra.fit_brody(s),
                "brb_classical": spectra.fit_brb(s, rho1),
                "brb_quantum": spectra.fit_brb(s),
            }
            report[lam_tag(lam)] = {
                "n_spacings": int(s.size),
                "mean_spacing": float(s.mean()),
                "rho1_classical": rho1,
                **{name: f.as_dict() for name, f in fits.items()},
            }
            hist, _ = np.histogram(s, bins=HIST_EDGES_S, density=True)
            centres = 0.5 * (HIST_EDGES_S[1:] + HIST_EDGES_S[:-1])
            io.write_csv(
                d / f"spacing_{lam_tag(lam)}.csv",
                ["S", "P_empirical", "P_brody", "P_brb_classical", "P_brb_quantum"],
                zip(centres, hist, *(f.model.pdf(centres) for f in fits.values())),
            )
        io.write_json(d / "fits.json", report)

    def _stage_beta_fit(self, d: Path) -> None:
        ld = self._require("localize")
        report = {}
        for lam in self.cfg.lambdas:
            rows = io.read_jsonl(ld / f"localization_{lam_tag(lam)}.jsonl")
            key = "A_normalized" if self.cfg.beta_fit_normalized else "A"
            a = np.array([r[key] for r in rows if r["class"] == "chaotic"])
            fit = spectra.fit_beta_dist(a, self.cfg.A0)
            m = spectra.beta_dist_moments(fit.model)
            report[lam_tag(lam)] = {
                **fit.as_dict(),
                "quantity": key,
                "sample_mean": float(a.mean()),
                "sample_sigma": float(a.std()),
                "moments": {"mean": m.mean, "second_moment": m.second_moment, "sigma": m.sigma,
                            "closed_mean": m.closed_mean, "closed_second_moment": m.closed_second_moment,
                            "printed_mean": m.printed_mean, "printed_second_moment": m.printed_second_moment,
                            "printed_sigma": m.printed_sigma, "printed_mismatch": m.printed_mismatch},
            }
            edges = np.linspace(0.0, fit.model.A0, HIST_BINS_A + 1)
            hist, _ = np.histogram(a, bins=edges, density=True)
            centres = 0.5 * (edges[1:] + edges[:-1])
            io.write_csv(d / f"PA_{lam_tag(lam)}.csv", ["A", "P_empirical", "P_beta"],
                         zip(centres, hist, fit.model.pdf(centres)))
        io.write_json(d / "beta.json", report)

    def _stage_report(self, d: Path) -> None:
        from .report import build_report

        build_report(self, d)
