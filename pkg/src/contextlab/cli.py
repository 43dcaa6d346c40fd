"""Batch front-end: run named experiments from flags, emit JSON and CSV.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.
Outputs are bit-identical for identical configuration and seed; the seed is
mandatory, nothing is seeded from the clock.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .catalog import SET_NAMES, STATE_NAMES, load_set, load_state
from .compat import condition_i_audit, default_quantum_preparations, p_err_sandwich, reports_to_csv
from .errors import ContextLabError
from .hvmodels import MODEL_IDS, make_model
from .inequalities import (
    chsh_epsilon,
    chsh_noise2,
    chsh_sequential,
    chsh_stoch,
    kcbs_sequential,
    ks_sequential,
)
from .noise import (
    DEFAULT_HEADLINE_TRIALS,
    DEFAULT_TABLE_TRIALS,
    NoiseConfig,
    NoisySystem,
    replicate_headlines,
    replicate_tables,
)
from .systems import HVSystem, QuantumSystem

DEFAULT_HV_TRIALS = 100_000


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    set_name: str
    state_name: str
    model: str | None
    model_params: dict
    noise: NoiseConfig | None
    trials: int | None
    seed: int
    out: Path | None


@dataclass(frozen=True)
class Recipe:
    id: str
    description: str
    formula: str
    default_set: str
    default_state: str
    runner: Callable[[ExperimentConfig], dict]


def _build_system(config: ExperimentConfig):
    if config.model is not None:
        model, distribution = make_model(config.model, config.model_params)
        return HVSystem(
            model, distribution, n_trials=config.trials or DEFAULT_HV_TRIALS, seed=config.seed
        )
    obs_set = load_set(config.set_name)
    state = load_state(config.state_name).state
    if config.noise is not None:
        return NoisySystem(state, obs_set, config.noise, n_trials=config.trials, seed=config.seed)
    return QuantumSystem(state, obs_set, seed=config.seed)


def _result_payload(config: ExperimentConfig, result) -> dict:
    return {
        "experiment": config.experiment,
        "seed": config.seed,
        "result": result.to_json_dict(),
    }


def _inequality_runner(evaluate) -> Callable[[ExperimentConfig], dict]:
    def run(config: ExperimentConfig) -> dict:
        system = _build_system(config)
        return _result_payload(config, evaluate(system, config))

    return run


def _epsilon_preparations(system, config: ExperimentConfig):
    if isinstance(system, HVSystem):
        return [(system.name, system)]
    pair_labels = system.observable_set.compatibility_edges[0]
    states = [
        load_state(name)
        for name in STATE_NAMES
        if load_state(name).state.dim == system.observable_set.dim
    ]
    return default_quantum_preparations(system, tuple(pair_labels), states)


def _run_tables(config: ExperimentConfig) -> dict:
    noise = config.noise if config.noise is not None else NoiseConfig()
    trials = config.trials or DEFAULT_TABLE_TRIALS
    tables = replicate_tables(noise, trials, seed=config.seed)
    payload = {
        "experiment": config.experiment,
        "seed": config.seed,
        "noise": noise.to_json_dict(),
        "n_trials": trials,
        "tables": {key: table.to_json_dict() for key, table in tables.items()},
    }
    if config.out is not None:
        for key, table in tables.items():
            (config.out / f"table_{key}.csv").write_text(table.to_csv(), encoding="utf-8")
    return payload


def _run_headlines(config: ExperimentConfig) -> dict:
    noise = config.noise if config.noise is not None else NoiseConfig()
    trials = config.trials or DEFAULT_HEADLINE_TRIALS
    headlines = replicate_headlines(noise, trials, seed=config.seed)
    return {
        "experiment": config.experiment,
        "seed": config.seed,
        "noise": noise.to_json_dict(),
        "n_trials": trials,
        "chi_ks": headlines["chi_ks"],
        "chi_ks_se": headlines["chi_ks_se"],
        "chsh_corrected": headlines["chsh_corrected"],
        "chsh_corrected_se": headlines["chsh_corrected_se"],
        "chsh_set": headlines["chsh_set"],
        "ks_result": headlines["ks_result"].to_json_dict(),
        "chsh_result": headlines["chsh_result"].to_json_dict(),
    }


def _run_compat_audit(config: ExperimentConfig) -> dict:
    system = _build_system(config)
    edges = getattr(system, "observable_set", None)
    if edges is not None:
        pairs = [tuple(edge[:2]) for edge in edges.compatibility_edges]
    else:
        labels = system.model.labels or ("A", "B")
        pairs = [
            (labels[i], labels[j])
            for i in range(len(labels))
            for j in range(i + 1, len(labels))
        ]
    reports = []
    audits = {}
    for first, second in pairs:
        reports.append(p_err_sandwich(system, second, first))
        audits[f"{first},{second}"] = [
            {"sequence": list(labels), "probability": probability}
            for labels, probability in condition_i_audit(system, (first, second), max_len=3)
        ]
    payload = {
        "experiment": config.experiment,
        "seed": config.seed,
        "sandwich_reports": [report.to_json_dict() for report in reports],
        "condition_i_audit": audits,
    }
    if config.out is not None:
        (config.out / "compat_reports.csv").write_text(reports_to_csv(reports), encoding="utf-8")
    return payload


RECIPES: dict[str, Recipe] = {}


def _register(recipe: Recipe) -> None:
    RECIPES[recipe.id] = recipe


_register(
    Recipe(
        id="chsh_plain",
        description="Four-term cyclic correlation functional, uncorrected bound",
        formula="|<A1B2> + <C1B2> + <C1D2> - <A1D2>| <= 2",
        default_set="chsh_entangled",
        default_state="phi_plus",
        runner=_inequality_runner(lambda system, config: chsh_sequential(system)),
    )
)
_register(
    Recipe(
        id="chsh_noise2",
        description="Four-term functional with sandwich disturbance corrections",
        formula="|X| <= 2 (1 + perr[B1A2B3] + perr[B1C2B3] + perr[D1C2D3] + perr[D1A2D3])",
        default_set="chsh_entangled",
        default_state="phi_plus",
        runner=_inequality_runner(lambda system, config: chsh_noise2(system)),
    )
)
_register(
    Recipe(
        id="chsh_stoch",
        description="Four-term functional with summed length-3 disturbance corrections",
        formula="|X| <= 2 (1 + perr[S3_AB] + perr[S3_CB] + perr[S3_CD] + perr[S3_AD])",
        default_set="chsh_entangled",
        default_state="phi_plus",
        runner=_inequality_runner(lambda system, config: chsh_stoch(system)),
    )
)
_register(
    Recipe(
        id="chsh_epsilon",
        description="Four-term functional with worst-case mean-shift corrections",
        formula="X <= 2 + eps_AB + eps_CB + eps_CD + eps_AD",
        default_set="chsh_entangled",
        default_state="phi_plus",
        runner=_inequality_runner(
            lambda system, config: chsh_epsilon(system, _epsilon_preparations(system, config))
        ),
    )
)
_register(
    Recipe(
        id="kcbs_plain",
        description="Pentagram functional on a three-level system, uncorrected bound",
        formula="<A1B2> + <C1B2> + <C1D2> + <E1D2> + <E1A2> >= -3",
        default_set="kcbs_pentagram",
        default_state="kcbs_optimal",
        runner=_inequality_runner(lambda system, config: kcbs_sequential(system, "plain")),
    )
)
_register(
    Recipe(
        id="kcbs_epsilon",
        description="Pentagram functional with worst-case mean-shift corrections",
        formula="X >= -3 - (eps_AB + eps_CB + eps_CD + eps_ED + eps_EA)",
        default_set="kcbs_pentagram",
        default_state="kcbs_optimal",
        runner=_inequality_runner(
            lambda system, config: kcbs_sequential(
                system, "epsilon", preparations=_epsilon_preparations(system, config)
            )
        ),
    )
)
_register(
    Recipe(
        id="ks_plain",
        description="Six-context square functional, uncorrected bound",
        formula="<ABC> + <abc> + <(al)(be)(ga)> + <Aa(al)> + <Bb(be)> - <Cc(ga)> <= 4",
        default_set="mermin_peres",
        default_state="fig2_psi",
        runner=_inequality_runner(lambda system, config: ks_sequential(system, "plain")),
    )
)
_register(
    Recipe(
        id="ks_extended",
        description="Square functional with per-context disturbance corrections",
        formula="X <= 4 + 4 sum(perr[sandwich] + perr[pair-then-third, length 4])",
        default_set="mermin_peres",
        default_state="fig2_psi",
        runner=_inequality_runner(lambda system, config: ks_sequential(system, "extended")),
    )
)
_register(
    Recipe(
        id="tables",
        description="Repeated-measurement correlation tables under the noise model",
        formula="alpha_ij = <record_i record_j> over five repeats",
        default_set="mermin_peres",
        default_state="max_mixed_2q",
        runner=_run_tables,
    )
)
_register(
    Recipe(
        id="headlines",
        description="Square functional and corrected four-term quantity under noise",
        formula="chi_KS and X - 2 sum(perr sandwich terms)",
        default_set="mermin_peres",
        default_state="fig2_psi",
        runner=_run_headlines,
    )
)
_register(
    Recipe(
        id="compat_audit",
        description="Sandwich disturbance and repeated-reading audit per pair",
        formula="perr[B1A2B3] and repeated-reading inconsistency probabilities",
        default_set="chsh_entangled",
        default_state="phi_plus",
        runner=_run_compat_audit,
    )
)


def _parse_noise(text: str | None) -> NoiseConfig | None:
    if text is None:
        return None
    if text == "default":
        return NoiseConfig()
    if text == "zero":
        return NoiseConfig.zero()
    path = Path(text)
    if path.exists():
        return NoiseConfig.from_json_dict(json.loads(path.read_text(encoding="utf-8")))
    return NoiseConfig.from_json_dict(json.loads(text))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contextlab")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a registered experiment")
    run.add_argument("--experiment", required=True)
    run.add_argument("--set", dest="set_name")
    run.add_argument("--state", dest="state_name")
    run.add_argument("--model", choices=MODEL_IDS)
    run.add_argument("--model-json", default="{}", help="JSON parameter block for the model")
    run.add_argument("--noise", help="'default', 'zero', inline JSON, or a JSON file path")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", type=Path)

    commands.add_parser("list", help="list registered experiments")

    show = commands.add_parser("show", help="dump a catalog set or state as JSON")
    show.add_argument("--set", dest="set_name", choices=SET_NAMES)
    show.add_argument("--state", dest="state_name", choices=STATE_NAMES)
    return parser


def _cmd_run(args) -> int:
    if args.experiment not in RECIPES:
        print(f"unknown experiment {args.experiment!r}; try 'contextlab list'", file=sys.stderr)
        return 2
    recipe = RECIPES[args.experiment]
    try:
        config = ExperimentConfig(
            experiment=args.experiment,
            set_name=args.set_name or recipe.default_set,
            state_name=args.state_name or recipe.default_state,
            model=args.model,
            model_params=json.loads(args.model_json),
            noise=_parse_noise(args.noise),
            trials=args.trials,
            seed=args.seed,
            out=args.out,
        )
        load_set(config.set_name)
        load_state(config.state_name)
    except (ContextLabError, ValueError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
    try:
        payload = recipe.runner(config)
    except ContextLabError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    if config.out is not None:
        (config.out / "result.json").write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_list() -> int:
    for recipe in RECIPES.values():
        print(f"{recipe.id}: {recipe.description}")
        print(f"    bound: {recipe.formula}")
    return 0


def _cmd_show(args) -> int:
    if args.set_name is None and args.state_name is None:
        print("show needs --set or --state", file=sys.stderr)
        return 2
    payload = {}
    if args.set_name is not None:
        payload["set"] = load_set(args.set_name).to_json_dict()
    if args.state_name is not None:
        payload["state"] = load_state(args.state_name).to_json_dict()
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list":
        return _cmd_list()
    return _cmd_show(args)


if __name__ == "__main__":
    sys.exit(main())
