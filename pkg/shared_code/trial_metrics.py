import os

from telegram_logging_handler import app_logger

# Azure Monitor is optional; without it metrics go to the log
try:
    from azure.monitor.opentelemetry.exporter import AzureMonitorMetricExporter
    from opentelemetry import metrics
    from opentelemetry.sdk.metrics import MeterProvider
    from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader

    connection_string = os.getenv("APPLICATIONINSIGHTS_CONNECTION_STRING")

    if connection_string:
        exporter = AzureMonitorMetricExporter(connection_string=connection_string)
        reader = PeriodicExportingMetricReader(exporter)
        provider = MeterProvider(metric_readers=[reader])
        metrics.set_meter_provider(provider)
        meter = metrics.get_meter(__name__)

        METRICS_AVAILABLE = True
        app_logger.debug("Azure Monitor metrics initialized")
    else:
        METRICS_AVAILABLE = False

except ImportError as e:
    METRICS_AVAILABLE = False
    app_logger.debug(f"Azure Monitor dependencies not available, metrics go to the log: {e}")
except Exception as e:
    METRICS_AVAILABLE = False
    app_logger.warning(f"Failed to initialize Azure Monitor metrics: {e}")

_gauges = {}


def log_custom_metric(name, value, attributes=None):
    """Record a gauge value through OpenTelemetry when configured, otherwise log it"""
    if METRICS_AVAILABLE:
        try:
            gauge = _gauges.get(name)
            if gauge is None:
                gauge = _gauges[name] = meter.create_gauge(name)
            gauge.set(value, attributes or {})
        except Exception as e:
            app_logger.error(f"Failed to log metric {name}: {e}")
    else:
        app_logger.debug(f"Metric {name}: {value} (attributes: {attributes})")


def log_trial_metrics(outcome):
    attributes = {"strategy": outcome.strategy, "trial": outcome.trial_index, "success": outcome.success}
    log_custom_metric("afg_trial_queries", outcome.queries, attributes)
    log_custom_metric("afg_trial_steps", outcome.steps_taken, attributes)
