from prettytable import PrettyTable

from shared_code.config import apply_overrides, load_config
from shared_code.environment import apply_intervention, create_env, drift_step
from shared_code.exceptions import ConfigurationError
from shared_code.experiment import derive_seeds
from shared_code.models import FACTOR, ActionPlan, Toggle, parse_ident
from shared_code.utils import render_step_row
from telegram_logging_handler import app_logger


def main(args) -> int:
    try:
        config = apply_overrides(load_config(args.config), master_seed=args.seed)
        if args.steps < 0:
            raise ConfigurationError("--steps must be nonnegative")
        enable = parse_ident(args.enable) if args.enable else None
        if enable is not None and (enable.kind != FACTOR or enable.index >= config.env_spec().num_factors):
            raise ConfigurationError(f"--enable expects a factor of this environment, got {args.enable}")
    except ConfigurationError as e:
        app_logger.error(f"Invalid demo setup: {e}")
        return 2

    env_seed, _ = derive_seeds(config.master_seed, 0)
    env = create_env(config.env_spec(), env_seed)

    table = PrettyTable()
    table.field_names = ["step"] + [str(i) for i in env.state().identifiers()] + ["drift", "note"]
    table.add_row(render_step_row(env.state(), drifted=False, note="initial"))

    for step in range(1, args.steps + 1):
        if step == 1 and enable is not None:
            state = apply_intervention(env, ActionPlan(toggles=(Toggle(enable.index, True),)))
            note = f"enable {enable}"
        else:
            state = drift_step(env)
            note = " ".join(f"flip f{i + 1}" for i in env.last_drifted)
        table.add_row(render_step_row(state, drifted=bool(env.last_drifted), note=note))

    print(table.get_string())
    return 0
