import functools
import logging
import sys
from pydantic import ValidationError
from app.exceptions import ConfigurationError, ForecastError


# 'func' is the subcommand body being wrapped
def exit_on_error(func):
    # Errors leave the process with the exit code their class carries:
    # 1 for domain errors, 2 for configuration and usage errors.
    @functools.wraps(func)
    def run_subcommand(*args, **kwargs):
        logging.info(f"Calling {func.__name__}")
        try:
            return func(*args, **kwargs)
        except ForecastError as error:
            logging.error(f"{func.__name__} failed: {error}")
            sys.exit(error.exit_code)
        except ValidationError as error:
            logging.error(f"{func.__name__} got an invalid configuration: {error}")
            sys.exit(ConfigurationError.exit_code)
        except FileNotFoundError as error:
            logging.error(f"{func.__name__} is missing an input: {error}")
            sys.exit(ConfigurationError.exit_code)

    return run_subcommand
