import os
import time
from typing import Any, Callable, Dict, List, Optional

import requests

from shared_code.exceptions import ConfigurationError, RemoteReasonerError
from telegram_logging_handler import app_logger

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LLMClient:
    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        model: str = "deepseek-r1:70b",
        retries: int = 3,
        timeout: float = 60.0,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        """
        Chat-completions client for the remote reasoner

        Parameters:
        -----------
        endpoint : str
            Full chat-completions URL (defaults to AFG_LLM_ENDPOINT env var)
        api_key : str
            Bearer token (defaults to AFG_LLM_API_KEY env var, optional for local servers)
        model : str
            Model name sent with every request
        retries : int
            Extra attempts after the first failure
        """
        self.endpoint = endpoint or os.environ.get("AFG_LLM_ENDPOINT")
        self.api_key = api_key if api_key is not None else os.environ.get("AFG_LLM_API_KEY", "")

        if not self.endpoint:
            app_logger.error("Remote reasoner endpoint not configured")
            raise ConfigurationError("AFG_LLM_ENDPOINT must be set for the remote backend")

        self.model = model
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self._sleep = sleep

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _payload(self, messages: List[Dict[str, str]]) -> Dict[str, Any]:
        return {"model": self.model, "messages": messages, "temperature": 0}

    def complete(self, system_message: str, user_message: str) -> str:
        """Send one chat completion and return the reply text"""
        messages = [
            {"role": "system", "content": system_message},
            {"role": "user", "content": user_message},
        ]
        delay = self.backoff
        last_error = "no attempt made"

        for attempt in range(self.retries + 1):
            try:
                response = requests.post(
                    self.endpoint,
                    json=self._payload(messages),
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                if response.status_code == 200:
                    data = response.json()
                    return data["choices"][0]["message"]["content"] or ""
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code not in RETRYABLE_STATUS:
                    break
            except requests.RequestException as e:
                last_error = f"Request exception: {e}"
            except (KeyError, IndexError, ValueError) as e:
                last_error = f"Malformed completion response: {e}"
                break

            if attempt < self.retries:
                app_logger.warning(f"Remote reasoner attempt {attempt + 1} failed ({last_error}), retrying")
                self._sleep(delay)
                delay *= 2.0

        app_logger.error(f"Remote reasoner failed: {last_error}")
        raise RemoteReasonerError(last_error, self.retries)
