#!/usr/bin/env python3
"""
compverify command line
Batch surface over the toolkit:

  check         model-check a composition against a safety property
  assume        weakest assumption and err automaton for an interface
  localspec     local perception specifications mined from the err automaton
  taxinet-gen   write the TaxiNet FSP sources and elaborated .aut files
  monitor       replay logged estimates through the assumption monitor
  monitor-prob  probability that the assumption monitor aborts within n steps
  export        print one model as aut, dot, json or fsp

Exit codes: 0 safe or ok, 1 unsafe, 2 usage or I/O error.
"""

import os
import sys
import json
import logging
import argparse
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from compverify.assumptions import (
    AssumptionResult, InterfaceAlphabet, assumption_to_json, build_assume,
)
from compverify.config import Settings, get_settings, setup_logging
from compverify.errors import CompverifyError
from compverify.formats import read_aut, read_json, write_aut, write_dot, write_json
from compverify.fsp import parse, print_fsp
from compverify.lts import Lts, check_safety, compose_all, property_to_error, size, universal_property
from compverify import dtmc, local_specs, taxinet
from compverify.monitor import Monitor, load_readings_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_ERROR = 2

FORMATS = ("aut", "dot", "json", "fsp")
ALPHABETS = ("est", "est+act")


# ==================== RUN CONFIG ====================

@dataclass
class RunConfig:
    """Validated view of the parsed arguments"""
    command: str
    inputs: List[str] = field(default_factory=list)
    compose: List[str] = field(default_factory=list)
    property_name: Optional[str] = None
    taxinet: Optional[int] = None
    perception: str = "Perfect"
    alphabet: str = "est"
    actual_bases: Tuple[str, ...] = ("act",)
    estimate_bases: Tuple[str, ...] = ("est",)
    horizon: int = 100
    profile: str = "uniform"
    out: str = "artifacts"
    formats: Tuple[str, ...] = ("aut", "dot")
    seed: int = 0
    count_sink: bool = True
    record: bool = False
    merge: bool = True
    aut_err: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace, settings: Settings) -> "RunConfig":
        formats = tuple(args.format) if getattr(args, "format", None) else ("aut", "dot")
        config = cls(
            command=args.command,
            inputs=list(getattr(args, "inputs", None) or []),
            compose=_split(getattr(args, "compose", None)),
            property_name=getattr(args, "property", None),
            taxinet=getattr(args, "taxinet", None),
            perception=getattr(args, "perception", "Perfect"),
            alphabet=getattr(args, "alphabet", "est"),
            actual_bases=tuple(_split(getattr(args, "actuals", None)) or ["act"]),
            estimate_bases=tuple(_split(getattr(args, "estimates", None)) or ["est"]),
            horizon=getattr(args, "horizon", 100),
            profile=getattr(args, "profile", "uniform"),
            out=args.out or settings.output_dir,
            formats=formats,
            seed=settings.seed if args.seed is None else args.seed,
            count_sink=settings.count_sink and not getattr(args, "no_sink", False),
            record=args.record,
            merge=getattr(args, "merge", True),
            aut_err=getattr(args, "aut_err", False),
        )
        config.validate()
        return config

    def validate(self):
        if self.taxinet is not None and self.taxinet < 1:
            raise CompverifyError(f"--taxinet needs a positive MaxCTE, got {self.taxinet}")
        if self.horizon < 0:
            raise CompverifyError(f"--horizon must be non-negative, got {self.horizon}")
        needs_model = self.command in ("check", "assume", "localspec", "export")
        if needs_model and self.taxinet is None and not self.inputs:
            raise CompverifyError("give model files or --taxinet M")
        if self.command in ("check", "assume", "localspec") and self.inputs and not self.compose:
            raise CompverifyError("--compose is required with model files")

    @property
    def cfg(self) -> "Optional[taxinet.DiscretizationConfig]":
        return None if self.taxinet is None else taxinet.DiscretizationConfig(self.taxinet)


def _split(value: Optional[str]) -> List[str]:
    if not value:
        return []
    return [part.strip() for part in value.split(",") if part.strip()]


# ==================== MODEL LOADING ====================

def load_models(paths: Sequence[str], aut_err: bool = False) -> Dict[str, Lts]:
    """
    FSP files are concatenated and elaborated together so declarations are
    shared; .aut and .json files contribute one model named after the file.
    """
    fsp_parts = []
    models: Dict[str, Lts] = {}
    for path in paths:
        with open(path) as f:
            text = f.read()
        stem, ext = os.path.splitext(os.path.basename(path))
        if ext == ".aut":
            models[stem] = read_aut(text, has_err=aut_err)
        elif ext == ".json":
            models[stem] = read_json(text)
        else:
            fsp_parts.append(text)
    if fsp_parts:
        for name, lts in parse("\n".join(fsp_parts)).items():
            models.setdefault(name, lts)
    logger.debug(f"loaded models: {', '.join(sorted(models))}")
    return models


def _pick(models: Dict[str, Lts], names: Sequence[str]) -> List[Lts]:
    missing = [n for n in names if n not in models]
    if missing:
        raise CompverifyError(f"Unknown model(s) {', '.join(missing)}; have {', '.join(sorted(models))}")
    return [models[n] for n in names]


def _system_and_property(config: RunConfig) -> Tuple[Lts, Lts, str]:
    """(system, error LTS of the property, display name)"""
    if config.taxinet is not None:
        cfg = config.cfg
        if config.command == "check":
            perception = {"Perfect": taxinet.perfect_perception,
                          "Worst": taxinet.worst_perception}[config.perception](cfg)
            return taxinet.closed_loop(cfg, perception), taxinet.safety_property(), \
                f"taxinet_m{cfg.max_cte}_{config.perception.lower()}"
        return taxinet.gen_m1(cfg), taxinet.safety_property(), f"taxinet_m{cfg.max_cte}_M1"

    models = load_models(config.inputs, config.aut_err)
    system = compose_all(_pick(models, config.compose))
    if config.property_name:
        prop = _pick(models, [config.property_name])[0]
        p_err = prop if prop.has_err else property_to_error(prop)
    else:
        p_err = universal_property()
    return system, p_err, "||".join(config.compose)


def _interface(config: RunConfig, system: Lts) -> InterfaceAlphabet:
    if config.taxinet is not None:
        return taxinet.interface_alphabet(config.cfg, with_actuals=config.alphabet == "est+act")
    actual_bases = config.actual_bases if config.alphabet == "est+act" else ()
    return InterfaceAlphabet.from_bases(system.alphabet, actual_bases, config.estimate_bases)


def _render(m: Lts, fmt: str, name: str) -> str:
    if fmt == "aut":
        return write_aut(m)
    if fmt == "dot":
        return write_dot(m, name)
    if fmt == "json":
        return write_json(m)
    return print_fsp(m, name)


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
    return path


def _record(config: RunConfig, settings: Settings, verdict: str, **fields):
    if not config.record:
        return
    from database.models import RunKind, Verdict, get_db_manager
    manager = get_db_manager(settings.database_url)
    manager.record_run(RunKind(config.command), Verdict(verdict),
                       max_cte=config.taxinet, **fields)


# ==================== COMMANDS ====================

def cmd_check(config: RunConfig, settings: Settings) -> int:
    system, p_err, name = _system_and_property(config)
    verdict = check_safety(system, p_err)
    states, transitions = size(system)
    if verdict.safe:
        print(f"SAFE {name} ({states} states, {transitions} transitions)")
        _record(config, settings, "safe", model_name=name, states=states, transitions=transitions)
        return EXIT_OK

    trace = ", ".join(str(a) for a in verdict.counterexample)
    print(f"UNSAFE {name} ({states} states, {transitions} transitions)")
    print(f"counterexample: {trace}")
    _record(config, settings, "unsafe", model_name=name, states=states,
            transitions=transitions, detail=trace)
    return EXIT_UNSAFE


def _assume(config: RunConfig) -> Tuple[AssumptionResult, InterfaceAlphabet, str]:
    system, p_err, name = _system_and_property(config)
    iface = _interface(config, system)
    return build_assume(system, p_err, iface, count_sink=config.count_sink), iface, name


def cmd_assume(config: RunConfig, settings: Settings) -> int:
    result, iface, name = _assume(config)
    stem = os.path.join(config.out, f"{name.replace('||', '_')}_{config.alphabet.replace('+', '_')}")
    written = [_write(f"{stem}.assume.json", json.dumps(assumption_to_json(result, iface), indent=2) + "\n")]
    for fmt in config.formats:
        written.append(_write(f"{stem}.assumption.{fmt}", _render(result.assumption, fmt, "Assumption")))
        written.append(_write(f"{stem}.err.{fmt}", _render(result.err_automaton, fmt, "ErrAutomaton")))

    line = result.stats.line(config.taxinet if config.taxinet is not None else "-")
    print(line)
    if result.empty:
        print("warning: assumption language is empty; no context over the interface keeps the system safe")
    logger.info(f"wrote {len(written)} artifacts under {config.out}")
    _record(config, settings, "empty" if result.empty else "ok", model_name=name,
            alphabet=config.alphabet, states=result.stats.states,
            transitions=result.stats.transitions, wall_time_ms=result.stats.wall_time_ms,
            peak_mem_kb=result.stats.peak_mem_kb, artifact_path=written[0], detail=line)
    return EXIT_OK


def cmd_localspec(config: RunConfig, settings: Settings) -> int:
    config.alphabet = "est+act"
    result, iface, name = _assume(config)
    specs = local_specs.synthesize_local_specs(result.err_automaton, iface, merge=config.merge)
    cfg = config.cfg
    for spec in specs:
        line = local_specs.render(spec)
        if cfg is not None:
            line += "\n    " + local_specs.render_intervals(local_specs.concretize(spec, cfg))
        print(f"{','.join(spec.provenance)}: {line}")
    path = _write(os.path.join(config.out, f"{name.replace('||', '_')}.localspecs.json"),
                  json.dumps(local_specs.specs_to_json(specs, cfg), indent=2, ensure_ascii=False) + "\n")
    _record(config, settings, "ok", model_name=name, alphabet=config.alphabet,
            states=len(specs), artifact_path=path)
    return EXIT_OK


def cmd_taxinet_gen(config: RunConfig, settings: Settings) -> int:
    cfg = config.cfg or taxinet.DiscretizationConfig()
    written = taxinet.write_models(cfg, config.out)
    for path in written:
        print(path)
    m1_states, m1_transitions = size(taxinet.gen_m1(cfg))
    print(f"m={cfg.max_cte} M1 states={m1_states} transitions={m1_transitions}")
    _record(config, settings, "ok", model_name=f"taxinet_m{cfg.max_cte}", states=m1_states,
            transitions=m1_transitions, artifact_path=config.out)
    return EXIT_OK


def cmd_monitor(config: RunConfig, settings: Settings, readings_path: str) -> int:
    cfg = config.cfg or taxinet.DiscretizationConfig()
    result = build_assume(taxinet.gen_m1(cfg), taxinet.safety_property(), taxinet.interface_alphabet(cfg))
    watcher = Monitor.from_assumption(result, cfg)
    verdict = watcher.feed_readings(load_readings_csv(readings_path))
    print(f"m={cfg.max_cte} {verdict.line()}")
    _record(config, settings, "abort" if verdict.aborted else "ok", model_name=f"taxinet_m{cfg.max_cte}",
            states=verdict.steps, artifact_path=readings_path, detail=verdict.line())
    return EXIT_UNSAFE if verdict.aborted else EXIT_OK


def resolve_profile(spec: str, cfg: taxinet.DiscretizationConfig) -> dtmc.ConfusionProfile:
    """identity, uniform, noisy:<accuracy> or a CSV path"""
    if spec == "identity":
        return dtmc.identity_profile(cfg)
    if spec == "uniform":
        return dtmc.uniform_profile(cfg)
    if spec.startswith("noisy:"):
        try:
            accuracy = float(spec.split(":", 1)[1])
        except ValueError:
            raise CompverifyError(f"Bad noisy profile {spec!r}; expected noisy:<accuracy>")
        return dtmc.noisy_profile(cfg, accuracy)
    return dtmc.load_profile_csv(spec, cfg)


def cmd_monitor_prob(config: RunConfig, settings: Settings, plot: bool = False,
                     prism: bool = False, runs: int = 0) -> int:
    cfg = config.cfg or taxinet.DiscretizationConfig()
    m1 = taxinet.gen_m1(cfg)
    result = build_assume(m1, taxinet.safety_property(), taxinet.interface_alphabet(cfg))
    profile = resolve_profile(config.profile, cfg)
    model = dtmc.build_monitored_dtmc(m1, profile, result.err_automaton, cfg)

    curve = dtmc.reachability_curve(model, "abort", config.horizon)
    unsafe = dtmc.bounded_reachability(model, "safety_err", config.horizon)
    stem = os.path.join(config.out, f"monitor_m{cfg.max_cte}")
    os.makedirs(config.out, exist_ok=True)
    dtmc.write_curve_csv(curve, f"{stem}.csv")
    if plot:
        dtmc.plot_curve({config.profile: curve}, f"{stem}.html")
    if prism:
        dtmc.write_prism(model, cfg, f"{stem}.pm")

    print(f"m={cfg.max_cte} dtmc_states={model.num_states} horizon={config.horizon} "
          f"P_abort={curve[-1]:.12g} P_unsafe={unsafe:.12g}")
    if runs:
        estimate = dtmc.simulate(model, "abort", config.horizon, runs, config.seed)
        print(f"simulated P_abort={estimate:.6f} over {runs} runs (seed {config.seed})")
    _record(config, settings, "ok", model_name=f"taxinet_m{cfg.max_cte}", states=model.num_states,
            transitions=int(model.matrix.nnz), artifact_path=f"{stem}.csv",
            detail=f"profile={config.profile} P_abort={curve[-1]:.12g}")
    return EXIT_OK


def cmd_export(config: RunConfig, settings: Settings, process: str, out_file: Optional[str]) -> int:
    if config.taxinet is not None:
        models = taxinet.all_models(config.cfg)
    else:
        models = load_models(config.inputs, config.aut_err)
    lts = _pick(models, [process])[0]
    text = _render(lts, config.formats[0], process)
    if out_file:
        _write(out_file, text)
        logger.info(f"exported {process} to {out_file}")
    else:
        sys.stdout.write(text)
    _record(config, settings, "ok", model_name=process, states=lts.num_states,
            transitions=len(lts.transitions), artifact_path=out_file)
    return EXIT_OK


# ==================== PARSER ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compverify",
                                     description="Compositional verification of learning-enabled systems")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default COMPVERIFY_OUTPUT_DIR)")
    common.add_argument("--seed", type=int, help="seed for randomized steps (default COMPVERIFY_SEED)")
    common.add_argument("--record", action="store_true", help="store the run in the run ledger")

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("inputs", nargs="*", help="FSP, .aut or .json model files")
    models.add_argument("--taxinet", type=int, metavar="M", help="use the generated TaxiNet models with MaxCTE=M")
    models.add_argument("--compose", metavar="A,B,C", help="processes to compose")
    models.add_argument("--property", help="process holding the safety property")
    models.add_argument("--aut-err", action="store_true", help="read state 0 of .aut inputs as err")

    iface = argparse.ArgumentParser(add_help=False)
    iface.add_argument("--alphabet", choices=ALPHABETS, default="est")
    iface.add_argument("--actuals", metavar="BASES", help="label bases tagged actual (default act)")
    iface.add_argument("--estimates", metavar="BASES", help="label bases tagged estimate (default est)")
    iface.add_argument("--no-sink", action="store_true", help="leave the sink out of the state count")

    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common, models], help="check a composition for safety")
    check.add_argument("--perception", choices=taxinet.PERCEPTIONS, default="Perfect")

    assume = sub.add_parser("assume", parents=[common, models, iface], help="build the weakest assumption")
    assume.add_argument("--format", choices=FORMATS, action="append")

    localspec = sub.add_parser("localspec", parents=[common, models, iface], help="synthesize local specifications")
    localspec.add_argument("--merge", dest="merge", action="store_true", default=True, help="one spec per actual (default)")
    localspec.add_argument("--separate", dest="merge", action="store_false", help="one spec per provenance state group")

    gen = sub.add_parser("taxinet-gen", parents=[common], help="write TaxiNet models")
    gen.add_argument("--max-cte", "--taxinet", dest="taxinet", type=int, default=2, metavar="M")

    watch = sub.add_parser("monitor", parents=[common], help="replay estimates through the monitor")
    watch.add_argument("--taxinet", type=int, default=2, metavar="M")
    watch.add_argument("--readings", required=True, help="CSV with cte,he or est_cte,est_he columns")

    monitor = sub.add_parser("monitor-prob", parents=[common], help="monitor abort probability")
    monitor.add_argument("--taxinet", type=int, default=2, metavar="M")
    monitor.add_argument("--profile", default="uniform", help="CSV path, identity, uniform or noisy:<accuracy>")
    monitor.add_argument("--horizon", type=int, default=100)
    monitor.add_argument("--plot", action="store_true", help="also write an HTML chart")
    monitor.add_argument("--prism", action="store_true", help="also write the PRISM model")
    monitor.add_argument("--simulate", type=int, default=0, metavar="RUNS", help="Monte Carlo cross-check")

    export = sub.add_parser("export", parents=[common, models], help="print one model")
    export.add_argument("--process", required=True)
    export.add_argument("--format", choices=FORMATS, action="append")
    export.add_argument("-o", "--output", help="file to write instead of stdout")
    return parser


# ==================== MAIN EXECUTION ====================

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR

    settings = get_settings()
    setup_logging(settings)

    try:
        config = RunConfig.from_args(args, settings)
        logger.info(f"running {config.command}")
        if config.command == "check":
            return cmd_check(config, settings)
        if config.command == "assume":
            return cmd_assume(config, settings)
        if config.command == "localspec":
            return cmd_localspec(config, settings)
        if config.command == "taxinet-gen":
            return cmd_taxinet_gen(config, settings)
        if config.command == "monitor":
            return cmd_monitor(config, settings, args.readings)
        if config.command == "monitor-prob":
            return cmd_monitor_prob(config, settings, args.plot, args.prism, args.simulate)
        return cmd_export(config, settings, args.process, args.output)

    except (CompverifyError, OSError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
