"""Three-phase cross-code training with weighted parameter averaging.

Phase 1 (warm-up) trains one decoder on a starting code.  Phase 2
(diversify-aggregate) clones it onto M code domains that train
independently, synchronizing every `agg_interval` epochs (and at the phase
boundary) by the weighted average theta_bar = sum_k w_k theta_k, which is
broadcast back to every domain.  Phase 3 (consolidation) fine-tunes
theta_bar on the aggregation-domain code with a reduced learning rate,
checkpointing on best validation LER with early stopping.

Parameter shapes are graph independent (all layers act on fixed widths),
so one parameter vector moves freely between codes; the plan validator
checks this by instantiating two domain models and comparing state shapes.

The aggregation-epoch condition is implemented verbatim from the
procedure's published form, `(tau + 1 - E_m) mod lambda == 0`, even though
the offset referencing E_m inside a loop that starts at E_w looks like a
typo for E_w; set `literal_agg_offset=False` for the E_w-anchored variant.
Both anchor the forced final aggregation at tau == E_m - 1.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codes as codes_mod
from . import noise
from . import nn
from .quba import EpochRecord, QubaModel, TrainConfig, train_quba


@dataclass(frozen=True)
class SaguPhaseSpec:
    code: str
    train_size: int
    val_size: int
    lr: float
    lr_step: int
    n_iters: int


@dataclass(frozen=True)
class SaguDomainSpec:
    code: str
    train_size: int
    val_size: int
    weight: float
    lr: float
    lr_step: int
    n_iters: int


@dataclass
class SaguPlan:
    warm: SaguPhaseSpec
    domains: list[SaguDomainSpec]
    consolidation: SaguPhaseSpec
    e_warm: int
    e_mid: int
    e_total: int
    agg_interval: int
    arch: dict
    p_max: float = 0.15
    seed: int = 0
    patience: int = 20
    val_mc_passes: int = 10
    batch_size: int = 16
    literal_agg_offset: bool = True

    def validate(self, registry=None) -> None:
        if not self.domains:
            raise ValueError("plan needs at least one diversify domain")
        wsum = sum(d.weight for d in self.domains)
        if abs(wsum - 1.0) > 1e-9:
            raise ValueError(f"domain weights sum to {wsum}, expected 1")
        zero = self.e_warm == self.e_mid == self.e_total == 0
        if not zero and not (0 <= self.e_warm < self.e_mid < self.e_total):
            raise ValueError(
                f"epoch budgets must satisfy E_w < E_m < E_tot, got "
                f"({self.e_warm}, {self.e_mid}, {self.e_total})"
            )
        if self.agg_interval < 1:
            raise ValueError("agg_interval must be >= 1")
        dsum = sum(d.train_size for d in self.domains)
        vsum = sum(d.val_size for d in self.domains)
        if not (self.warm.train_size == self.consolidation.train_size == dsum):
            raise ValueError(
                f"phase train sizes must match: warm {self.warm.train_size}, "
                f"domains total {dsum}, consolidation {self.consolidation.train_size}"
            )
        if not (self.warm.val_size == self.consolidation.val_size == vsum):
            raise ValueError(
                f"phase val sizes must match: warm {self.warm.val_size}, "
                f"domains total {vsum}, consolidation {self.consolidation.val_size}"
            )
        if registry is not None:
            for name in self.code_names():
                codes_mod.get_spec(registry, name)
        # parameter shapes must be identical across domains for averaging
        a = QubaModel.from_arch({**self.arch, "n_iters": self.domains[0].n_iters})
        b = QubaModel.from_arch({**self.arch, "n_iters": self.domains[-1].n_iters})
        sa, sb = a.state_arrays(), b.state_arrays()
        if {k: v.shape for k, v in sa.items()} != {k: v.shape for k, v in sb.items()}:
            raise ValueError("domain architectures yield mismatched parameter shapes")

    def code_names(self) -> list[str]:
        return [self.warm.code, *(d.code for d in self.domains),
                self.consolidation.code]

    def to_json(self, path) -> None:
        payload = asdict(self)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "SaguPlan":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["warm"] = SaguPhaseSpec(**raw["warm"])
        raw["consolidation"] = SaguPhaseSpec(**raw["consolidation"])
        raw["domains"] = [SaguDomainSpec(**d) for d in raw["domains"]]
        return cls(**raw)


def is_aggregation_epoch(tau: int, e_warm: int, e_mid: int, lam: int,
                         literal: bool = True) -> bool:
    """Whether parameters synchronize after diversify epoch tau.

    The literal published condition anchors the modulus at E_m; the
    corrected variant anchors at E_w.  Both force a final aggregation at
    tau == E_m - 1.
    """
    anchor = e_mid if literal else e_warm
    return (tau + 1 - anchor) % lam == 0 or tau == e_mid - 1


def aggregate_params(models, weights) -> dict[str, np.ndarray]:
    """Elementwise weighted average of parameter states.

    Accepts QubaModel instances or plain state dicts; every array
    (variational mu and rho included, plus batchnorm statistics) is
    averaged with the given weights.
    """
    states = [m.state_arrays() if hasattr(m, "state_arrays") else m for m in models]
    weights = [float(w) for w in weights]
    if len(states) != len(weights):
        raise ValueError("one weight per model required")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {sum(weights)}, expected 1")
    keys = set(states[0])
    for st in states[1:]:
        if set(st) != keys:
            raise ValueError("models expose different parameter sets")
        for k in keys:
            if st[k].shape != states[0][k].shape:
                raise ValueError(
                    f"shape mismatch for {k}: {st[k].shape} vs {states[0][k].shape}"
                )
    return {
        k: sum(w * st[k] for w, st in zip(weights, states)).astype(states[0][k].dtype)
        for k in keys
    }


def broadcast_params(models, state: dict[str, np.ndarray]) -> None:
    for m in models:
        m.load_state_arrays(copy.deepcopy(state))


def _phase_seed(plan_seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence((plan_seed, *tags)).generate_state(1)[0])


def _ensure_datasets(plan: SaguPlan, registry, workdir, code_cache):
    """Generate the per-phase train/val dataset files (deterministic)."""
    os.makedirs(workdir, exist_ok=True)
    paths = {}
    phases = [("warm", plan.warm, 0)]
    phases += [("domain", d, i + 1) for i, d in enumerate(plan.domains)]
    phases += [("cons", plan.consolidation, len(plan.domains) + 1)]
    for tag, spec, pid in phases:
        code = code_cache[spec.code]
        for split, size, sid in (("train", spec.train_size, 0),
                                 ("val", spec.val_size, 1)):
            fname = f"sagu_{pid}_{tag}_{split}.ds"
            path = os.path.join(workdir, fname)
            seed = _phase_seed(plan.seed, pid, sid)
            if not os.path.exists(path):
                noise.generate_dataset(code, size, plan.p_max, seed, path)
            paths[(pid, split)] = noise.load_dataset(path, code)
    return paths


def run_sagu(plan: SaguPlan, registry, workdir) -> tuple[QubaModel, list[EpochRecord]]:
    """Execute the three phases; returns the consolidated model and history."""
    plan.validate(registry)
    code_cache = {
        name: codes_mod.build_code(codes_mod.get_spec(registry, name))
        for name in dict.fromkeys(plan.code_names())
    }
    datasets = _ensure_datasets(plan, registry, workdir, code_cache)
    history: list[EpochRecord] = []

    warm_model = QubaModel.from_arch(
        {**plan.arch, "n_iters": plan.warm.n_iters}, seed=plan.seed)
    if plan.e_total == 0:
        return warm_model, history

    # -- warm-up: train straight through, carry the final parameters
    warm_cfg = TrainConfig(
        epochs=plan.e_warm, batch_size=plan.batch_size, lr=plan.warm.lr,
        lr_step=plan.warm.lr_step, patience=plan.e_warm + 1,
        val_mc_passes=plan.val_mc_passes, seed=_phase_seed(plan.seed, 100),
        restore_best=False,
    )
    warm_code = code_cache[plan.warm.code]
    train_quba(warm_model, warm_code, datasets[(0, "train")], datasets[(0, "val")],
               warm_cfg, phase="warm", history=history)
    theta_start = copy.deepcopy(warm_model.state_arrays())

    # -- diversify-aggregate
    models, opt_states, schedules = [], [], []
    for i, dom in enumerate(plan.domains):
        m = QubaModel.from_arch({**plan.arch, "n_iters": dom.n_iters},
                                seed=plan.seed)
        m.load_state_arrays(copy.deepcopy(theta_start))
        models.append(m)
        opt_states.append(nn.OptimizerState(lr=dom.lr))
        schedules.append(nn.StepDecaySchedule(dom.lr, dom.lr_step))
    weights = [d.weight for d in plan.domains]

    theta_bar = theta_start
    for tau in range(plan.e_warm, plan.e_mid):
        local = tau - plan.e_warm
        for i, dom in enumerate(plan.domains):
            cfg = TrainConfig(
                epochs=1, batch_size=plan.batch_size,
                lr=schedules[i].lr(local), lr_step=10 ** 9,
                patience=2, val_mc_passes=plan.val_mc_passes,
                seed=_phase_seed(plan.seed, 200 + i), restore_best=False,
            )
            opt_states[i].lr = cfg.lr
            train_quba(models[i], code_cache[dom.code],
                       datasets[(i + 1, "train")], datasets[(i + 1, "val")],
                       cfg, phase="diversify", domain=dom.code,
                       opt_state=opt_states[i], epoch_offset=tau, history=history)
        if is_aggregation_epoch(tau, plan.e_warm, plan.e_mid, plan.agg_interval,
                                plan.literal_agg_offset):
            theta_bar = aggregate_params(models, weights)
            broadcast_params(models, theta_bar)

    # -- consolidation: reduced lr, checkpoint best, early stop
    final = QubaModel.from_arch(
        {**plan.arch, "n_iters": plan.consolidation.n_iters}, seed=plan.seed)
    final.load_state_arrays(copy.deepcopy(theta_bar))
    cons_cfg = TrainConfig(
        epochs=plan.e_total - plan.e_mid, batch_size=plan.batch_size,
        lr=plan.consolidation.lr, lr_step=plan.consolidation.lr_step,
        patience=plan.patience, val_mc_passes=plan.val_mc_passes,
        seed=_phase_seed(plan.seed, 300), restore_best=True,
    )
    cons_id = len(plan.domains) + 1
    train_quba(final, code_cache[plan.consolidation.code],
               datasets[(cons_id, "train")], datasets[(cons_id, "val")],
               cons_cfg, phase="consolidation", domain=plan.consolidation.code,
               epoch_offset=plan.e_mid, history=history)
    return final, history


def build_default_plan(registry) -> SaguPlan:
    """The published four-domain schedule over the BB family."""
    needed = ("[[72,12,6]]", "[[90,8,10]]", "[[144,12,12]]", "[[288,12,18]]")
    for name in needed:
        codes_mod.get_spec(registry, name)  # raises KeyError when missing
    e_warm, e_mid, e_total = 20, 50, 90
    warm_step = (2 * e_warm) // 3
    domain_step = (2 * (e_mid - e_warm)) // 3
    return SaguPlan(
        warm=SaguPhaseSpec("[[72,12,6]]", 24_000, 1_200, 5e-4, warm_step, 35),
        domains=[
            SaguDomainSpec("[[90,8,10]]", 6_000, 300, 0.1, 5e-4, domain_step, 40),
            SaguDomainSpec("[[144,12,12]]", 8_000, 400, 0.2, 5e-4, domain_step, 50),
            SaguDomainSpec("[[288,12,18]]", 10_000, 500, 0.7, 5e-4, domain_step, 65),
        ],
        consolidation=SaguPhaseSpec("[[288,12,18]]", 24_000, 1_200, 1e-4, 10, 50),
        e_warm=e_warm, e_mid=e_mid, e_total=e_total, agg_interval=10,
        arch={"d_h": 64, "msg_hidden": 128, "heads": 4, "dropout": 0.1},
        p_max=0.15,
    )
