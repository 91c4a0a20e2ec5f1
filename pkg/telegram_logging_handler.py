import logging
import os
import sys

import requests
from dotenv import load_dotenv

load_dotenv()

LOGGER_NAME = "AfgLogger"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class TelegramHandler(logging.Handler):
    def __init__(self, token, chat_id, timeout=10):
        super().__init__()
        self.token = token
        self.chat_id = chat_id
        self.timeout = timeout

    def emit(self, record):
        try:
            log_entry = self.format(record)
            self.send_telegram_message(log_entry)
        except Exception:
            self.handleError(record)

    def send_telegram_message(self, message):
        url = f"https://api.telegram.org/bot{self.token}/sendMessage"
        payload = {"chat_id": self.chat_id, "text": message}
        try:
            requests.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException:
            # delivery failures are dropped
            pass


def _level_from_env():
    name = os.environ.get("AFG_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def setup_logger():
    logger = logging.getLogger(LOGGER_NAME)
    if logger.handlers:
        return logger

    level = _level_from_env()
    logger.setLevel(level)
    logger.propagate = False

    formatter = logging.Formatter(LOG_FORMAT)

    # Console handler on stderr, stdout carries the reports
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Telegram Handler (ERROR level)
    telegram_token = os.environ.get("AFG_TELEGRAM_TOKEN")
    telegram_chat_id = os.environ.get("AFG_TELEGRAM_CHAT_ID")
    if telegram_token and telegram_chat_id:
        telegram_handler = TelegramHandler(telegram_token, telegram_chat_id)
        telegram_handler.setLevel(logging.ERROR)
        telegram_handler.setFormatter(formatter)
        logger.addHandler(telegram_handler)
    else:
        logger.debug("Telegram logging not configured due to missing environment variables")

    return logger


# Create the logger instance
app_logger = setup_logger()
