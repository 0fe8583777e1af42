import logging
import os
from typing import Optional

import requests

from utils import ValidationError

LIVE = "live"
OFFLINE_STUB = "offline-stub"


class TranslatorClient:
    """
    Client for an external term translator.

    Live mode posts {q, source, target} as JSON and reads `translatedText` from the
    reply (either top level or under data.translations[0]). Offline-stub mode answers
    from a local map and never touches the network.
    """

    def __init__(
        self,
        endpoint: str = "",
        access_token: Optional[str] = None,
        timeout: float = 10.0,
        mode: str = OFFLINE_STUB,
        stub_map: Optional[dict] = None,
        source_lang: str = "en",
        target_lang: str = "ckb",
    ):
        if mode not in (LIVE, OFFLINE_STUB):
            raise ValidationError(f"unknown translator mode {mode}")
        if mode == LIVE and not endpoint:
            raise ValidationError("live translator mode needs an endpoint")
        self.endpoint = endpoint
        self.mode = mode
        self.timeout = timeout
        self.stub_map = dict(stub_map or {})
        self.source_lang = source_lang
        self.target_lang = target_lang
        self.headers = {"Content-Type": "application/json"}
        if access_token:
            self.headers["Authorization"] = f"Bearer {access_token}"
        self.logger = logging.getLogger(__name__)

    @classmethod
    def from_config(cls, config, stub_map: Optional[dict] = None) -> "TranslatorClient":
        return cls(
            endpoint=config.translator_endpoint,
            access_token=os.environ.get(config.translator_token_env),
            timeout=config.translator_timeout,
            mode=config.translator_mode,
            stub_map=stub_map,
            source_lang=config.source_lang,
            target_lang=config.target_lang,
        )

    def _make_request(self, method, data=None):
        # One retry for timeouts and dropped connections; HTTP errors raise at once.
        last_exc = None
        for attempt in range(2):
            try:
                response = requests.request(
                    method, self.endpoint, headers=self.headers, json=data,
                    timeout=(self.timeout, self.timeout * 12),
                )
                break
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                self.logger.warning(
                    "Translator request %s failed (%s), attempt %d/2",
                    method, exc.__class__.__name__, attempt + 1,
                )
        else:
            raise last_exc
        response.raise_for_status()
        return response.json()

    def translate(self, term: str) -> Optional[str]:
        """
        Translate one term. Returns None when the stub has no entry or the reply
        carries no usable translation; network and HTTP errors propagate.
        """
        if self.mode == OFFLINE_STUB:
            return self.stub_map.get(term)
        reply = self._make_request("POST", {"q": term, "source": self.source_lang, "target": self.target_lang})
        text = _translated_text(reply)
        if not isinstance(text, str):
            self.logger.warning(f"Translator reply for {term!r} has no translatedText string, leaving it")
            return None
        return text.strip() or None


def _translated_text(reply):
    # either {"translatedText": ...} or {"data": {"translations": [{"translatedText": ...}]}}
    if not isinstance(reply, dict):
        return None
    if "translatedText" in reply:
        return reply["translatedText"]
    data = reply.get("data")
    translations = data.get("translations") if isinstance(data, dict) else None
    if isinstance(translations, list) and translations and isinstance(translations[0], dict):
        return translations[0].get("translatedText")
    return None
