from shared_code.exceptions import ConfigurationError, StatisticsError
from shared_code.statistics import welch_t
from shared_code.utils import read_report_column, render_welch_table
from telegram_logging_handler import app_logger


def main(args) -> int:
    try:
        a = read_report_column(args.csv_a, args.column, args.strategy_a)
        b = read_report_column(args.csv_b, args.column, args.strategy_b)
        result = welch_t(a, b)
    except (ConfigurationError, StatisticsError) as e:
        app_logger.error(f"ttest failed: {e}")
        return 2

    print(render_welch_table(result))
    return 0
