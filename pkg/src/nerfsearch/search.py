"""Constrained generative architecture search.

A generator holds independent categorical distributions over every discrete
architecture choice (per-field depths and channels). Each round it samples
candidates (channels are drawn in non-decreasing order so structural
feasibility holds by construction), the survivors of the budget checks are
proxy-trained and scored, and the distributions are refit on the elite
quantile by the universal metric among target-satisfying candidates, falling
back to the highest-SSIM candidates when none meet the target. Scene-specific
SSIM targets come from two trained boundary architectures, interpolated at
10/50/90% between their scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import count_params, estimate_flops, er_params
from .data import SceneDataset
from .field import (ArchitectureDescriptor, CellConfig, baseline_descriptor,
                    build_pair)
from .train import (TrainSettings, TrainingDiverged, downsample_dataset,
                    evaluate, render_settings_for, train_pair)

GENERATOR_FLOOR = 1e-3
LADDER_FRACTIONS = (0.1, 0.5, 0.9)
SIZE_NAMES = ("xxs", "xs", "s")


@dataclass(frozen=True)
class SearchSpace:
    """Finite per-factor choice sets; the coarse and fine fields choose
    independently, optionally from their own grids. The default grid spans
    every table configuration and the uniform 8x256 reference."""

    d1_choices: tuple = tuple(range(1, 9))
    d3_choices: tuple = tuple(range(1, 9))
    channel_choices: tuple = tuple(range(8, 257))
    coarse_d1: tuple | None = None
    coarse_d3: tuple | None = None
    coarse_channels: tuple | None = None
    fine_d1: tuple | None = None
    fine_d3: tuple | None = None
    fine_channels: tuple | None = None

    def factor_keys(self) -> list[str]:
        return [f"{fld}.{fac}" for fld in ("coarse", "fine")
                for fac in ("d1", "d3", "c1", "c2", "c3")]

    def choices_for(self, key: str) -> tuple:
        fld, fac = key.split(".")
        fac = "channels" if fac.startswith("c") else fac
        override = getattr(self, f"{fld}_{fac}")
        if override is not None:
            return override
        return {"d1": self.d1_choices, "d3": self.d3_choices,
                "channels": self.channel_choices}[fac]

    def _cell(self, fld: str, pick) -> CellConfig:
        d1 = pick(self.choices_for(f"{fld}.d1"))
        d3 = pick(self.choices_for(f"{fld}.d3"))
        c = pick(self.choices_for(f"{fld}.c1"))
        return CellConfig((d1, 1, d3), (c, c, c))

    def minimum_descriptor(self) -> ArchitectureDescriptor:
        return ArchitectureDescriptor(coarse=self._cell("coarse", min),
                                      fine=self._cell("fine", min))

    def maximum_descriptor(self) -> ArchitectureDescriptor:
        """Largest reference-shaped member: depths capped at (4, 1, 3) and the
        widest uniform channels. For the default grid this is exactly the
        uniform 8x256 reference pair."""
        cells = {}
        for fld in ("coarse", "fine"):
            d1 = min(4, max(self.choices_for(f"{fld}.d1")))
            d3 = min(3, max(self.choices_for(f"{fld}.d3")))
            c = max(self.choices_for(f"{fld}.c1"))
            cells[fld] = CellConfig((d1, 1, d3), (c, c, c))
        return ArchitectureDescriptor(coarse=cells["coarse"],
                                      fine=cells["fine"])

    def contains(self, descriptor: ArchitectureDescriptor) -> bool:
        for fld, cell in (("coarse", descriptor.coarse),
                          ("fine", descriptor.fine)):
            d1, _, d3 = cell.depths
            if d1 not in self.choices_for(f"{fld}.d1"):
                return False
            if d3 not in self.choices_for(f"{fld}.d3"):
                return False
            chans = self.choices_for(f"{fld}.c1")
            if any(c not in chans for c in cell.channels):
                return False
        return True


@dataclass
class ConstraintSet:
    """Feasibility predicate: structure, optional budgets, SSIM target."""

    require_nondecreasing: bool = True
    strict_increase: bool = False
    ssim_target: float | None = None
    max_params: int | None = None
    max_flops: float | None = None


def check_constraints(descriptor: ArchitectureDescriptor, ssim: float | None,
                      constraints: ConstraintSet) -> tuple[bool, str]:
    """Returns (feasible, reason); infeasibility is a result, not an error."""
    for name, cell in (("coarse", descriptor.coarse), ("fine", descriptor.fine)):
        c1, c2, c3 = cell.channels
        if constraints.strict_increase:
            if not (c1 < c2 < c3):
                return False, f"{name} widths not strictly increasing"
        elif constraints.require_nondecreasing:
            if not (c1 <= c2 <= c3):
                return False, "widths decrease"
    if constraints.max_params is not None:
        if count_params(descriptor) > constraints.max_params:
            return False, "params over budget"
    if constraints.max_flops is not None:
        if estimate_flops(descriptor) > constraints.max_flops:
            return False, "flops over budget"
    if constraints.ssim_target is not None:
        if ssim is None:
            return False, "ssim not measured"
        if not np.isfinite(ssim):
            return False, "proxy training diverged"
        if ssim < constraints.ssim_target:
            return False, "ssim below target"
    return True, "ok"


@dataclass
class TargetLadder:
    """Scene-specific SSIM targets between the boundary scores."""

    ssim_min: float
    ssim_max: float
    t_xxs: float
    t_xs: float
    t_s: float

    def targets(self) -> list[tuple[str, float]]:
        return [("xxs", self.t_xxs), ("xs", self.t_xs), ("s", self.t_s)]

    def to_dict(self) -> dict:
        return {"ssim_min": self.ssim_min, "ssim_max": self.ssim_max,
                "t_xxs": self.t_xxs, "t_xs": self.t_xs, "t_s": self.t_s}


def compute_targets(ssim_min: float, ssim_max: float) -> TargetLadder:
    """Linear interpolation at 10/50/90% between the boundary scores."""
    if ssim_min > ssim_max:
        raise ValueError(
            f"degenerate scene signal: boundary ssim_min {ssim_min} exceeds "
            f"ssim_max {ssim_max}")
    span = ssim_max - ssim_min
    t = [ssim_min + f * span for f in LADDER_FRACTIONS]
    return TargetLadder(ssim_min=ssim_min, ssim_max=ssim_max,
                        t_xxs=t[0], t_xs=t[1], t_s=t[2])


def universal_metric(ssim: float, params_m: float, flops_g: float,
                     alpha: float = 2.0, beta: float = 0.5,
                     gamma: float = 0.5) -> float:
    """20 log10((100 ssim)^alpha / (params_M^beta flops_G^gamma))."""
    if ssim <= 0 or params_m <= 0 or flops_g <= 0:
        raise ValueError("universal metric requires positive inputs")
    return 20.0 * (alpha * math.log10(100.0 * ssim)
                   - beta * math.log10(params_m)
                   - gamma * math.log10(flops_g))


def scaled_iterations(er_params_value: float, policy: str = "inverse",
                      baseline_iters: int = 200_000,
                      floor: int = 16_000) -> int:
    """Training budget scaled by the parameter efficiency ratio.

    inverse (default): baseline_iters / er, so smaller architectures train
    for proportionally fewer steps; proportional multiplies instead. Results
    clamp to [floor, baseline_iters].
    """
    if er_params_value <= 0:
        raise ValueError("efficiency ratio must be positive")
    if policy == "inverse":
        raw = baseline_iters / er_params_value
    elif policy == "proportional":
        raw = baseline_iters * er_params_value
    elif policy == "fixed":
        raw = baseline_iters
    else:
        raise ValueError(f"unknown iteration policy {policy!r}")
    return int(min(max(int(round(raw)), floor), baseline_iters))


@dataclass
class GeneratorState:
    """Independent categorical distributions, one per architecture factor.

    Probabilities stay on the simplex with a floor so no choice collapses to
    zero; refits blend the floored elite frequencies into the current
    distribution (``smoothing`` is the elite weight) so one lucky round does
    not extinguish exploration.
    """

    space: SearchSpace
    probs: dict[str, np.ndarray]
    floor: float = GENERATOR_FLOOR
    smoothing: float = 0.5
    round_counter: int = 0

    @classmethod
    def initial(cls, space: SearchSpace, floor: float = GENERATOR_FLOOR
                ) -> "GeneratorState":
        probs = {}
        for key in space.factor_keys():
            n = len(space.choices_for(key))
            probs[key] = np.full(n, 1.0 / n)
        return cls(space=space, probs=probs, floor=floor)

    def _draw(self, key: str, rng, lower=None, strict=False, uniform=False):
        choices = self.space.choices_for(key)
        arr = np.asarray(choices)
        p = (np.full(len(choices), 1.0 / len(choices)) if uniform
             else self.probs[key])
        if lower is not None:
            mask = arr > lower if strict else arr >= lower
            if not mask.any():
                return int(arr[-1])
            p = np.where(mask, p, 0.0)
        cdf = np.cumsum(p)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return int(arr[min(idx, len(arr) - 1)])

    def sample(self, rng, constraints: ConstraintSet,
               uniform: bool = False) -> ArchitectureDescriptor:
        """Draw one descriptor; channels are drawn left to right conditioned
        on the structural ordering so sampled candidates satisfy it.
        ``uniform=True`` ignores the learned distributions (exploration)."""
        cells = {}
        ordered = constraints.require_nondecreasing or constraints.strict_increase
        strict = constraints.strict_increase
        for fld in ("coarse", "fine"):
            d1 = self._draw(f"{fld}.d1", rng, uniform=uniform)
            d3 = self._draw(f"{fld}.d3", rng, uniform=uniform)
            c1 = self._draw(f"{fld}.c1", rng, uniform=uniform)
            c2 = self._draw(f"{fld}.c2", rng, lower=c1 if ordered else None,
                            strict=strict, uniform=uniform)
            c3 = self._draw(f"{fld}.c3", rng, lower=c2 if ordered else None,
                            strict=strict, uniform=uniform)
            cells[fld] = CellConfig((d1, 1, d3), (c1, c2, c3))
        return ArchitectureDescriptor(coarse=cells["coarse"], fine=cells["fine"])

    def refit(self, elites: list[ArchitectureDescriptor]) -> None:
        if not elites:
            return
        values = {key: [] for key in self.space.factor_keys()}
        for desc in elites:
            for fld, cell in (("coarse", desc.coarse), ("fine", desc.fine)):
                values[f"{fld}.d1"].append(cell.depths[0])
                values[f"{fld}.d3"].append(cell.depths[2])
                for i, fac in enumerate(("c1", "c2", "c3")):
                    values[f"{fld}.{fac}"].append(cell.channels[i])
        for key, vals in values.items():
            choices = np.asarray(self.space.choices_for(key))
            counts = np.zeros(len(choices), dtype=np.float64)
            for v in vals:
                counts[np.searchsorted(choices, v)] += 1.0
            q = counts / counts.sum()
            floored = self.floor + (1.0 - len(choices) * self.floor) * q
            self.probs[key] = ((1.0 - self.smoothing) * self.probs[key]
                               + self.smoothing * floored)
        self.round_counter += 1


@dataclass
class Candidate:
    descriptor: ArchitectureDescriptor
    round: int
    index: int
    params: int
    flops: int
    proxy_ssim: float | None = None
    u_score: float | None = None
    feasible: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "round": self.round, "index": self.index,
            "descriptor": self.descriptor.to_dict(),
            "params": self.params, "params_M": self.params / 1e6,
            "flops": self.flops, "flops_G": self.flops / 1e9,
            "proxy_ssim": self.proxy_ssim, "u_score": self.u_score,
            "feasible": self.feasible, "reason": self.reason,
        }


@dataclass
class Budget:
    rounds: int = 8
    samples_per_round: int = 24
    proxy_iterations: int = 4000
    elite_fraction: float = 0.25


@dataclass
class ProxyConfig:
    """Short-training protocol used to rank candidates during the search."""

    rays_per_batch: int = 1024
    n_coarse: int = 32
    n_fine: int = 32
    downsample: int = 2
    eval_images: int = 2
    learning_rate: float = 5e-4


@dataclass
class SearchResult:
    target: float
    feasible: bool
    best: Candidate | None
    candidates: list[Candidate]
    seed: int
    budget: Budget
    policy: dict

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "feasible": self.feasible,
            "best": self.best.to_dict() if self.best else None,
            "candidates": [c.to_dict() for c in self.candidates],
            "seed": self.seed,
            "budget": {"rounds": self.budget.rounds,
                       "samples_per_round": self.budget.samples_per_round,
                       "proxy_iterations": self.budget.proxy_iterations,
                       "elite_fraction": self.budget.elite_fraction},
            "policy": self.policy,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"


def make_training_proxy(dataset: SceneDataset, budget: Budget,
                        config: ProxyConfig):
    """Default inquisitor evidence: short training on a downsampled split."""
    small = downsample_dataset(dataset, config.downsample)

    def proxy(descriptor: ArchitectureDescriptor, seed: int) -> float:
        coarse, fine = build_pair(descriptor, seed=seed)
        settings = TrainSettings(
            iterations=budget.proxy_iterations,
            rays_per_batch=config.rays_per_batch,
            n_coarse=config.n_coarse, n_fine=config.n_fine,
            learning_rate=config.learning_rate, seed=seed,
            eval_max_images=config.eval_images, log_every=0)
        try:
            result = train_pair(coarse, fine, small, settings)
        except TrainingDiverged:
            return float("nan")
        return result.final_ssim

    return proxy


def run_search(scene: SceneDataset | None, target: float,
               space: SearchSpace | None = None,
               constraints: ConstraintSet | None = None,
               budget: Budget | None = None, seed: int = 0,
               proxy=None, proxy_config: ProxyConfig | None = None,
               progress=None) -> SearchResult:
    """Generator/inquisitor loop for one SSIM target.

    ``proxy`` maps (descriptor, seed) to a proxy SSIM; by default it is short
    real training on the scene. Candidates failing structure or budgets are
    logged without training. The returned best is the feasible candidate with
    the highest universal metric; when none meets the target the result is
    marked infeasible rather than raising. Same seed, same scene: identical
    result, byte for byte.
    """
    space = space or SearchSpace()
    constraints = replace(constraints or ConstraintSet(), ssim_target=target)
    structural_only = replace(constraints, ssim_target=None)
    budget = budget or Budget()
    proxy_config = proxy_config or ProxyConfig()
    if proxy is None:
        if scene is None:
            raise ValueError("run_search needs a scene or an explicit proxy")
        proxy = make_training_proxy(scene, budget, proxy_config)

    gen = GeneratorState.initial(space)
    all_candidates: list[Candidate] = []
    seen: dict[str, Candidate] = {}
    best: Candidate | None = None
    for rnd in range(budget.rounds):
        round_cands: list[Candidate] = []
        for i in range(budget.samples_per_round):
            rng = np.random.default_rng([max(seed, 0), rnd, i])
            desc = gen.sample(rng, constraints)
            # duplicates reuse their cached evidence; resample toward unseen
            # points (uniform proposals) so proxy budget is not wasted
            attempts = 0
            while desc.canonical_json() in seen and attempts < 40:
                desc = gen.sample(rng, constraints, uniform=attempts >= 2)
                attempts += 1
            key = desc.canonical_json()
            cand = Candidate(descriptor=desc, round=rnd, index=i,
                             params=count_params(desc),
                             flops=estimate_flops(desc))
            if key in seen:
                prior = seen[key]
                cand.proxy_ssim = prior.proxy_ssim
                cand.feasible, cand.reason = prior.feasible, prior.reason
                cand.u_score = prior.u_score
                round_cands.append(cand)
                continue
            ok, reason = check_constraints(desc, None, structural_only)
            if not ok:
                cand.feasible, cand.reason = False, reason
                seen[key] = cand
                round_cands.append(cand)
                continue
            cand_seed = seed * 1_000_003 + rnd * 10_007 + i
            cand.proxy_ssim = proxy(desc, cand_seed)
            cand.feasible, cand.reason = check_constraints(
                desc, cand.proxy_ssim, constraints)
            if cand.feasible:
                cand.u_score = universal_metric(
                    cand.proxy_ssim, cand.params / 1e6, cand.flops / 1e9)
                if best is None or cand.u_score > best.u_score:
                    best = cand
            seen[key] = cand
            round_cands.append(cand)
            if progress is not None:
                progress(f"round {rnd + 1}/{budget.rounds} candidate "
                         f"{i + 1}/{budget.samples_per_round}: "
                         f"{cand.params} params, proxy ssim "
                         f"{cand.proxy_ssim:.4f} ({cand.reason})")
        all_candidates.extend(round_cands)

        scored = [c for c in round_cands
                  if c.proxy_ssim is not None and np.isfinite(c.proxy_ssim)]
        meeting = [c for c in scored if c.feasible]
        n_elite = max(1, math.ceil(budget.elite_fraction * budget.samples_per_round))
        if meeting:
            pool = sorted(meeting, key=lambda c: (-c.u_score, c.round, c.index))
        else:
            pool = sorted(scored, key=lambda c: (-c.proxy_ssim, c.round, c.index))
        elites = pool[:n_elite]
        if best is not None and best not in elites:
            elites.append(best)  # keep the incumbent in every refit
        gen.refit([c.descriptor for c in elites])

    policy = {
        "generator_floor": gen.floor,
        "elite_rule": "u_score among target-satisfying, ssim fallback",
        "proxy": {"rays_per_batch": proxy_config.rays_per_batch,
                  "n_coarse": proxy_config.n_coarse,
                  "n_fine": proxy_config.n_fine,
                  "downsample": proxy_config.downsample,
                  "eval_images": proxy_config.eval_images},
    }
    return SearchResult(target=target, feasible=best is not None, best=best,
                        candidates=all_candidates, seed=seed, budget=budget,
                        policy=policy)


@dataclass
class BoundaryResult:
    ssim_min: float
    ssim_max: float
    a_min: ArchitectureDescriptor
    a_max: ArchitectureDescriptor
    errors: dict[str, str] = field(default_factory=dict)


def train_boundary(scene: SceneDataset, iterations: int = 16_000,
                   space: SearchSpace | None = None,
                   settings: TrainSettings | None = None,
                   seed: int = 0) -> BoundaryResult:
    """Train the smallest and the reference-sized space members and score
    them on the eval split; divergence is reported per architecture."""
    space = space or SearchSpace()
    a_min = space.minimum_descriptor()
    a_max = space.maximum_descriptor()
    base = settings or TrainSettings()
    ssims = {}
    errors = {}
    for name, desc in (("a_min", a_min), ("a_max", a_max)):
        coarse, fine = build_pair(desc, seed=seed)
        ts = replace(base, iterations=iterations, seed=seed)
        try:
            result = train_pair(coarse, fine, scene, ts)
            ssims[name] = result.final_ssim
        except TrainingDiverged as exc:
            ssims[name] = float("nan")
            errors[name] = str(exc)
    return BoundaryResult(ssim_min=ssims["a_min"], ssim_max=ssims["a_max"],
                          a_min=a_min, a_max=a_max, errors=errors)


@dataclass
class SceneSearchResult:
    ladder: TargetLadder
    results: dict[str, SearchResult]
    named: dict[str, ArchitectureDescriptor]

    def to_dict(self) -> dict:
        return {
            "ladder": self.ladder.to_dict(),
            "results": {k: v.to_dict() for k, v in self.results.items()},
            "named": {k: d.to_dict() for k, d in self.named.items()},
        }


def search_scene(scene: SceneDataset, ladder: TargetLadder,
                 space: SearchSpace | None = None,
                 constraints: ConstraintSet | None = None,
                 budget: Budget | None = None, seed: int = 0,
                 proxy=None, proxy_config: ProxyConfig | None = None,
                 progress=None) -> SceneSearchResult:
    """Run one search per ladder target and name the emitted architectures
    by ascending parameter count (xxs smallest)."""
    results: dict[str, SearchResult] = {}
    for k, (tname, tval) in enumerate(ladder.targets()):
        sub = None
        if progress is not None:
            sub = lambda msg, _t=tname: progress(f"target {_t}: {msg}")
        results[tname] = run_search(scene, tval, space, constraints, budget,
                                    seed=seed + k, proxy=proxy,
                                    proxy_config=proxy_config, progress=sub)
    emitted = [(r.best.params, tname, r.best.descriptor)
               for tname, r in results.items() if r.best is not None]
    emitted.sort(key=lambda item: item[0])
    named = {SIZE_NAMES[i]: desc for i, (_, _, desc) in enumerate(emitted)}
    return SceneSearchResult(ladder=ladder, results=results, named=named)


def enumerate_space(space: SearchSpace, constraints: ConstraintSet | None = None,
                    limit: int = 100_000) -> list[ArchitectureDescriptor]:
    """Exhaustive structural enumeration for small spaces (tests, audits)."""
    constraints = constraints or ConstraintSet()
    out = []
    structural = replace(constraints, ssim_target=None)
    cells_by_field = {}
    for fld in ("coarse", "fine"):
        chans = space.choices_for(f"{fld}.c1")
        cells = []
        for d1 in space.choices_for(f"{fld}.d1"):
            for d3 in space.choices_for(f"{fld}.d3"):
                for c1 in chans:
                    for c2 in chans:
                        for c3 in chans:
                            cells.append(CellConfig((d1, 1, d3), (c1, c2, c3)))
        cells_by_field[fld] = cells
    for cc in cells_by_field["coarse"]:
        for fc in cells_by_field["fine"]:
            desc = ArchitectureDescriptor(coarse=cc, fine=fc)
            if check_constraints(desc, None, structural)[0]:
                out.append(desc)
                if len(out) > limit:
                    raise ValueError("space too large to enumerate")
    return out
