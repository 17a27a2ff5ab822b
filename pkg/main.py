import logging
import sys
from typing import List, Optional

from src.app.exceptions import ConfigError, NumericalContractError, ResourceCapError
from src.config.runtime import configure_logging, thread_limits
from src.routes.commands import dispatch, parse_args, resolve_config

logger = logging.getLogger("east_models")


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; exit codes 2 config, 3 resource cap, 4 numerical contract"""
    args = parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = resolve_config(args)
        logger.info("Running %s with %d thread(s)", config.command, args.threads)
        with thread_limits(args.threads) as threads:
            dispatch(config, threads)
    except (ConfigError, ResourceCapError, NumericalContractError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    logger.info("Finished %s", config.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
