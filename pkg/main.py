# main.py

import argparse
import os
import sys
from typing import Any, Dict, List, Literal, Optional

# Add current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

# Check for required dependencies
try:
    import numpy as np
    from dotenv import load_dotenv
    from pydantic import BaseModel, ConfigDict, ValidationError, field_validator
except ImportError as e:
    print(f"❌ Missing required dependency: {e}")
    print("Please install dependencies:")
    print("   pip install -r requirements.txt")
    sys.exit(1)

from config.settings import RunSettings, load_settings, setup_logging
from config.system_profile import SystemProfileModel, load_params
from engine.admm_engine import admm_solve, load_warm_start
from engine.scheduler import Scheduler
from model.params import SystemParams, validate
from model.policy import ConditionalPolicy, STATE_BUSY, STATE_IDLE, to_conditional
from sim.scan import no_cooperation_factory, optimal_policy_factory, stability_scan
from sim.simulator import ArrivalLaw, SimConfig, no_cooperation_policy, replica_seeds, replicate
from solvers.objectives import LOG_OFFSET, parse_objective
from solvers.optimizer import solve_opt0, solve_throughput
from solvers.regions import (c2_max_weighted_rate, max_stable_rate, quarter_circle_directions,
                             rate_region_boundary)
from solvers.sensing import SensingModel, solve_opt1
from utils.errors import (EXIT_OK, ConfigError, ConvergenceError, ErrorHandler, InfeasibleError,
                          with_error_handling)
from utils.file_manager import ArtifactWriter
from utils.session_manager import RunSession

COMMANDS = ('validate', 'stability', 'solve', 'throughput', 'admm', 'sensing', 'simulate', 'scan', 'region')


class ExperimentSpec(BaseModel):
    """Everything one CLI invocation needs; the manifest stores it verbatim."""

    model_config = ConfigDict(extra='forbid')

    command: Literal['validate', 'stability', 'solve', 'throughput', 'admm', 'sensing',
                     'simulate', 'scan', 'region']
    params: str
    out: Optional[str] = None
    lambda_p: Optional[float] = None
    lambda_grid: Optional[List[float]] = None
    objective: Literal['sum', 'weighted', 'log'] = 'sum'
    weights: Optional[List[float]] = None
    log_offset: float = LOG_OFFSET
    method: Literal['auto', 'lp', 'frank-wolfe'] = 'auto'
    su_arrivals: Optional[List[float]] = None
    rho: Optional[float] = None
    eps: Optional[float] = None
    max_iter: Optional[int] = None
    warm_start: Optional[str] = None
    pd: Optional[float] = None
    pf: Optional[float] = None
    search: Literal['grid', 'ternary'] = 'grid'
    grid_points: int = 201
    qb_tol: float = 1e-7
    seed: int = 0
    slots: int = 100_000
    replications: int = 1
    arrival_law: Literal['bernoulli', 'poisson'] = 'bernoulli'
    policy: Literal['optimal', 'no-coop'] = 'optimal'
    directions: int = 9
    c2: bool = False
    workers: Optional[int] = None

    @field_validator('pd', 'pf')
    @classmethod
    def check_probability(cls, v):
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError(f"must lie in [0,1], got {v}")
        return v

    @field_validator('slots', 'replications', 'grid_points')
    @classmethod
    def check_positive(cls, v):
        if v < 1:
            raise ValueError(f"must be at least 1, got {v}")
        return v

    @field_validator('lambda_p')
    @classmethod
    def check_rate(cls, v):
        if v is not None and v < 0:
            raise ValueError(f"must be nonnegative, got {v}")
        return v

    @property
    def sensing(self) -> Optional[SensingModel]:
        if self.pd is None and self.pf is None:
            return None
        return SensingModel(p_detect=1.0 if self.pd is None else self.pd,
                            p_false_alarm=0.0 if self.pf is None else self.pf)


def parse_grid(text: str) -> List[float]:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid {text!r} must look like start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"grid {text!r} needs step > 0 and stop >= start")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return parse_floats(text)


def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='coopradio',
        description='Cooperation policies for a primary user served by relaying secondary users')
    parser.add_argument('command', choices=COMMANDS, help='What to compute')
    parser.add_argument('--params', required=True,
                        help='Params JSON file, or a reference instance name (two_su, five_su)')
    parser.add_argument('--out', help='Output directory (default: COOPRADIO_OUTPUT_DIR or outputs)')
    parser.add_argument('--lambda-p', type=parse_grid, dest='lambda_p',
                        help='PU arrival rate override; for scan also start:stop:step or a comma list')
    parser.add_argument('--lambda-grid', type=parse_grid, dest='lambda_grid',
                        help='PU arrival rates for scan: start:stop:step or a comma list')
    parser.add_argument('--objective', choices=['sum', 'weighted', 'log'], default='sum',
                        help='Utility of the SU rates')
    parser.add_argument('--weights', type=parse_floats, help='Per-SU weights, comma separated')
    parser.add_argument('--log-offset', type=float, dest='log_offset', default=LOG_OFFSET,
                        help='Offset inside the log utility')
    parser.add_argument('--method', choices=['auto', 'lp', 'frank-wolfe'], default='auto',
                        help='Centralized solver path')
    parser.add_argument('--su-arrivals', type=parse_floats, dest='su_arrivals',
                        help='Per-SU packet arrival rates (exogenous traffic)')
    parser.add_argument('--rho', type=float, help='ADMM penalty parameter')
    parser.add_argument('--eps', type=float, help='ADMM local convergence threshold')
    parser.add_argument('--max-iter', type=int, dest='max_iter', help='ADMM iteration cap')
    parser.add_argument('--warm-start', dest='warm_start',
                        help='ADMM state file, solve report.json or policy.csv from a previous run')
    parser.add_argument('--pd', type=float, help='Detection probability')
    parser.add_argument('--pf', type=float, help='False-alarm probability')
    parser.add_argument('--search', choices=['grid', 'ternary'], default='grid',
                        help='Busy-probability search under imperfect sensing')
    parser.add_argument('--grid-points', type=int, dest='grid_points', default=201,
                        help='Grid size for the busy-probability search')
    parser.add_argument('--qb-tol', type=float, dest='qb_tol', default=1e-7,
                        help='Interval width at which ternary search stops')
    parser.add_argument('--seed', type=int, default=0, help='Root seed for simulation')
    parser.add_argument('--slots', type=int, default=100_000, help='Simulated slots per run')
    parser.add_argument('--replications', type=int, default=1, help='Independent simulation runs')
    parser.add_argument('--arrival-law', choices=['bernoulli', 'poisson'], dest='arrival_law',
                        default='bernoulli', help='Arrival law for PU and SU packets')
    parser.add_argument('--policy', choices=['optimal', 'no-coop'], default='optimal',
                        help='Policy simulated by simulate/scan')
    parser.add_argument('--directions', type=int, default=9, help='Weight directions for region')
    parser.add_argument('--c2', action='store_true', help='Also report the relaxed-priority support values')
    parser.add_argument('--workers', type=int, help='Processes for grid and replication fan-out')
    parser.add_argument('--log-level', dest='log_level',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'], help='Logging level')
    return parser


def _pick(flag, default):
    return default if flag is None else flag


def conditional_rows(policy: ConditionalPolicy) -> List[Dict[str, Any]]:
    rows = []
    for state, tables in ((STATE_IDLE, policy.cond_idle), (STATE_BUSY, policy.cond_busy)):
        for s, row in enumerate(tables):
            for i, value in enumerate(row):
                rows.append({'state': state, 'su': s, 'level': i, 'probability': float(value)})
    return rows


class ExperimentRunner:
    """Executes one ExperimentSpec and writes its artifacts."""

    def __init__(self, spec: ExperimentSpec, settings: RunSettings):
        self.spec = spec
        self.settings = settings
        self.writer = ArtifactWriter(spec.out or settings.output_dir, spec.command)
        self.scheduler = Scheduler(_pick(spec.workers, settings.workers))
        self.session = RunSession(self.writer, spec.command, spec.model_dump(), settings=settings.to_dict())

    def params(self) -> SystemParams:
        params = load_params(self.spec.params, self.spec.lambda_p)
        self.session.record_params(SystemProfileModel.from_params(params).model_dump())
        return params

    def objective(self, num_sus: int):
        objective = parse_objective(self.spec.objective, self.spec.weights, self.spec.log_offset)
        objective.validate(num_sus)
        return objective

    def checked_params(self) -> SystemParams:
        params = self.params()
        violations = validate(params)
        if violations:
            raise ConfigError(f"{len(violations)} parameter violations",
                              {'violations': [v.message for v in violations]})
        return params

    # -- commands ---------------------------------------------------------

    def cmd_validate(self) -> int:
        params = self.params()
        violations = validate(params)
        self.writer.write_json('validation.json', {
            'valid': not violations,
            'violations': [{'code': v.code, 'message': v.message, 'index': v.index} for v in violations],
        })
        if violations:
            for v in violations:
                print(f"❌ {v.message}")
            return ConfigError("invalid parameters").exit_code
        print(f"✅ {params.name or self.spec.params} is valid ({params.num_sus} SUs)")
        return EXIT_OK

    def cmd_stability(self) -> int:
        params = self.checked_params()
        result = max_stable_rate(params)
        self.writer.write_json('stability.json', result.to_dict())
        print(f"✅ maximum stable PU rate λ̂ = {result.value:.10g}")
        return EXIT_OK

    def cmd_solve(self) -> int:
        params = self.checked_params()
        report = solve_opt0(params, self.objective(params.num_sus), method=self.spec.method)
        self.writer.write_json('report.json', report.to_dict())
        self.writer.write_csv('policy.csv', report.policy.to_rows(), ['state', 'su', 'level', 'probability'])
        print(f"✅ f = {report.objective_value:.10g}, rates = {np.round(report.rates, 6).tolist()}")
        return EXIT_OK

    def cmd_throughput(self) -> int:
        params = self.checked_params()
        if self.spec.su_arrivals is None:
            raise ConfigError("throughput needs --su-arrivals")
        result = solve_throughput(params, self.spec.su_arrivals, self.objective(params.num_sus),
                                  method=self.spec.method)
        self.writer.write_json('report.json', result.to_dict())
        self.writer.write_csv('policy.csv', result.report.policy.to_rows(),
                              ['state', 'su', 'level', 'probability'])
        print(f"✅ throughputs = {np.round(result.throughputs, 6).tolist()}, "
              f"admission = {np.round(result.admission, 6).tolist()}")
        return EXIT_OK

    def cmd_admm(self) -> int:
        params = self.checked_params()
        init = load_warm_start(self.spec.warm_start, params) if self.spec.warm_start else None
        result = admm_solve(params, self.objective(params.num_sus),
                            rho=_pick(self.spec.rho, self.settings.admm_rho),
                            eps=_pick(self.spec.eps, self.settings.admm_eps),
                            init=init, max_iter=_pick(self.spec.max_iter, self.settings.admm_max_iter))
        self.writer.write_json('report.json', result.to_dict())
        self.writer.write_json('state.json', result.state.to_dict())
        self.writer.write_csv('policy.csv', result.report.policy.to_rows(), ['state', 'su', 'level', 'probability'])
        self.writer.write_csv('trace.csv', [row.to_row() for row in result.trace])
        self.writer.write_csv('broadcasts.csv', result.log.to_rows())
        if not result.converged:
            raise ConvergenceError(f"ADMM did not converge within {result.iterations} iterations",
                                   {'coupling_residual': result.report.residuals['coupling_residual']})
        print(f"✅ ADMM converged in {result.iterations} iterations: f = {result.report.objective_value:.10g}")
        return EXIT_OK

    def cmd_sensing(self) -> int:
        params = self.checked_params()
        sensing = self.spec.sensing or SensingModel()
        report = solve_opt1(params, sensing, self.objective(params.num_sus), search=self.spec.search,
                            grid_points=self.spec.grid_points, qb_tol=self.spec.qb_tol,
                            scheduler=self.scheduler)
        self.writer.write_json('report.json', report.to_dict())
        self.writer.write_csv('curve.csv', report.curve_rows(), ['busy_prob', 'g'])
        self.writer.write_csv('policy.csv', conditional_rows(report.policy), ['state', 'su', 'level', 'probability'])
        if report.concavity_violations:
            print(f"⚠️ g(q_b) broke concavity at {report.concavity_violations} sampled triples")
        print(f"✅ q_b* = {report.busy_prob:.8g}, f = {report.value:.10g}")
        return EXIT_OK

    def _sim_policy(self, params: SystemParams, objective):
        """Policy to simulate, with admission probabilities when SUs have exogenous traffic."""
        sensing = self.spec.sensing
        if self.spec.policy == 'no-coop':
            return no_cooperation_policy(params, objective), None
        if self.spec.su_arrivals is not None:
            result = solve_throughput(params, self.spec.su_arrivals, objective, method=self.spec.method)
            return to_conditional(result.report.policy), result.admission.tolist()
        if sensing is not None and not sensing.is_perfect:
            return solve_opt1(params, sensing, objective, scheduler=self.scheduler).policy, None
        return to_conditional(solve_opt0(params, objective, method=self.spec.method).policy), None

    def _sim_config(self, admission=None) -> SimConfig:
        su_laws = None
        if self.spec.su_arrivals is not None:
            su_laws = tuple(ArrivalLaw(rate, self.spec.arrival_law) for rate in self.spec.su_arrivals)
        return SimConfig(horizon=self.spec.slots, seed=self.spec.seed, pu_law=self.spec.arrival_law,
                         su_arrivals=su_laws, sensing=self.spec.sensing,
                         admission=None if admission is None else tuple(admission))

    def cmd_simulate(self) -> int:
        params = self.checked_params()
        objective = self.objective(params.num_sus)
        policy, admission = self._sim_policy(params, objective)
        config = self._sim_config(admission)
        reports = replicate(params, policy, config, self.spec.replications, self.scheduler)
        self.session.record_seeds(replica_seeds(config.seed, self.spec.replications))
        self.writer.write_csv('replications.csv', [r.to_row() for r in reports])
        self.writer.write_json('report.json', {
            'config': config.to_dict(),
            'replications': [r.to_dict() for r in reports],
            'mean_throughputs': np.mean([r.throughputs for r in reports], axis=0).tolist(),
            'mean_busy_fraction': float(np.mean([r.busy_fraction for r in reports])),
        })
        mean = np.mean([r.throughputs for r in reports], axis=0)
        print(f"✅ {len(reports)} run(s) of {config.horizon} slots: throughputs {np.round(mean, 5).tolist()}")
        return EXIT_OK

    def cmd_scan(self) -> int:
        params = self.checked_params()
        if not self.spec.lambda_grid:
            raise ConfigError("scan needs --lambda-grid")
        objective = self.objective(params.num_sus)
        factory = (no_cooperation_factory(objective) if self.spec.policy == 'no-coop'
                   else optimal_policy_factory(objective))
        config = self._sim_config()
        rows = stability_scan(params, factory, self.spec.lambda_grid, config, self.scheduler)
        self.session.record_seeds([config.seed])
        self.writer.write_csv('scan.csv', [row.to_row() for row in rows])
        stable = sum(1 for row in rows if row.feasible)
        print(f"✅ scanned {len(rows)} PU rates ({stable} with a stabilizing policy)")
        return EXIT_OK

    def cmd_region(self) -> int:
        params = self.checked_params()
        if params.num_sus == 2:
            directions = quarter_circle_directions(self.spec.directions)
        else:
            directions = [row for row in np.eye(params.num_sus)] + [np.ones(params.num_sus)]
        points = rate_region_boundary(params, params.pu_arrival_rate, directions)
        rows = [p.to_row() for p in points]
        if self.spec.c2:
            for row, point in zip(rows, points):
                try:
                    row['c2_value'] = c2_max_weighted_rate(params, params.pu_arrival_rate, point.direction)
                except InfeasibleError:
                    row['c2_value'] = float('nan')
        self.writer.write_csv('region.csv', rows)
        print(f"✅ {len(rows)} support points at λ_p = {params.pu_arrival_rate}")
        return EXIT_OK

    def execute(self, handler: ErrorHandler) -> int:
        command = getattr(self, f"cmd_{self.spec.command}")
        exit_code = with_error_handling(handler, self.spec.command)(command)()
        if exit_code != EXIT_OK and handler.last_error is not None:
            self.writer.write_json('error.json', handler.last_error)
            print(f"❌ {handler.last_error['message']}")
        self.session.record_errors(handler.get_error_statistics())
        self.session.finish(exit_code)
        return exit_code


def run(spec: ExperimentSpec, settings: Optional[RunSettings] = None) -> int:
    """Run one experiment; returns the process exit code."""
    settings = settings or RunSettings().validate()
    return ExperimentRunner(spec, settings).execute(ErrorHandler())


def split_lambda_values(values: Dict[str, Any]):
    """--lambda-p carries one rate, or the scan grid when the command is scan."""
    rates = values.pop('lambda_p', None)
    if rates is None:
        return
    if values['command'] == 'scan' and 'lambda_grid' not in values:
        values['lambda_grid'] = rates
    elif len(rates) == 1:
        values['lambda_p'] = rates[0]
    else:
        raise ConfigError(f"--lambda-p takes a single rate for {values['command']}")


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    handler = ErrorHandler()
    try:
        settings = load_settings()
        if args.log_level:
            settings.log_level = args.log_level
        setup_logging(settings)
        values = {k: v for k, v in vars(args).items() if v is not None and k != 'log_level'}
        split_lambda_values(values)
        spec = ExperimentSpec(**values)
    except ValidationError as e:
        print(f"❌ Invalid arguments:\n{e}")
        return ConfigError("invalid arguments").exit_code
    except ConfigError as e:
        return handler.handle(e, 'configure')['exit_code']
    return run(spec, settings)


if __name__ == "__main__":
    sys.exit(main())
