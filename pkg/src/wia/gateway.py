"""Prompt rendering and remote chat-completion evaluation.

Prompt templates ship as external files with pinned checksums, so the exact
wording driving a run is auditable and can be swapped for ablations without
touching code. Rendering is pure text substitution: the empty placeholder
tags in a template are filled with canonical serializations, and the
``#time_gap#`` marker becomes the forecast horizon in seconds.

``evaluate_remote`` walks a triplet dataset against any chat-completion
endpoint: render, query, extract the answer, score with the rule-based
verifier. Results are keyed by provenance and written as they complete, so
an interrupted run resumes exactly where it stopped and a completed run is a
no-op to re-run.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import requests

from .actions import REGISTRY, ActionLabel
from .errors import (AuthMissing, GatewayError, HttpStatus, IoFailure,
                     PromptTooLong, RequestTimeout, RetriesExhausted)
from .pipeline import WiaTriplet
from .reward import RewardSpec, batch_reward
from .state import GameState, serialize_state
from .diff import serialize_delta

PROMPT_KINDS = ("forecast", "distill", "downstream")

_TEMPLATE_LOCK: dict[str, str] | None = None


def _template_lock() -> dict[str, str]:
    global _TEMPLATE_LOCK
    if _TEMPLATE_LOCK is None:
        raw = resources.files("wia").joinpath("templates/templates.lock").read_bytes()
        _TEMPLATE_LOCK = json.loads(raw)
    return _TEMPLATE_LOCK


def load_template(kind: str, verify: bool = True) -> str:
    if kind not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind {kind!r}")
    name = f"{kind}.txt"
    raw = resources.files("wia").joinpath(f"templates/{name}").read_bytes()
    if verify:
        digest = hashlib.sha256(raw).hexdigest()
        expected = _template_lock().get(name)
        if digest != expected:
            raise IoFailure(f"template {name} checksum mismatch: "
                            f"{digest} != {expected}")
    return raw.decode("utf-8")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    auth_env: str = "WIA_API_TOKEN"
    timeout_s: float = 30.0
    max_retries: int = 3
    prompt_max_len: int = 8192
    generate_max_len: int = 2048
    concurrency: int = 4
    temperature: float = 0.0  # 0 for single-shot eval; 1.0 for group sampling
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.prompt_max_len <= 0 or self.generate_max_len <= 0:
            raise ValueError("length limits must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def _estimate_tokens(text: str) -> int:
    # chars/4 heuristic; no tokenizer is bundled, so this is an estimate.
    return math.ceil(len(text) / 4)


def _check_length(prompt: str, prompt_max_len: int) -> str:
    est = _estimate_tokens(prompt)
    if est > prompt_max_len:
        raise PromptTooLong(f"prompt is ~{est} tokens, limit {prompt_max_len}")
    return prompt


def _fill(template: str, tag: str, content: str) -> str:
    return template.replace(f"<{tag}></{tag}>", f"<{tag}>{content}</{tag}>")


def render_forecast_prompt(state: GameState, action: ActionLabel,
                           horizon_s: int, prompt_max_len: int = 8192) -> str:
    text = load_template("forecast")
    text = text.replace("#time_gap#", str(horizon_s))
    text = _fill(text, "game_state", serialize_state(state))
    text = _fill(text, "action", action.name)
    return _check_length(text, prompt_max_len)


def render_distill_prompt(triplet: WiaTriplet, prompt_max_len: int = 8192) -> str:
    text = load_template("distill")
    text = text.replace("#time_gap#", str(triplet.horizon_s))
    text = _fill(text, "game_state", serialize_state(triplet.state))
    text = _fill(text, "action", triplet.action.name)
    text = _fill(text, "game_state_change", serialize_delta(triplet.delta))
    return _check_length(text, prompt_max_len)


def render_downstream_prompt(state: GameState,
                             candidates: list[ActionLabel] | None = None,
                             prompt_max_len: int = 8192) -> str:
    if candidates is None:
        candidates = list(REGISTRY)
    if not candidates:
        raise ValueError("candidates must be non-empty")
    listing = "; ".join(a.name for a in candidates)
    text = load_template("downstream")
    text = _fill(text, "game_state", serialize_state(state))
    text = _fill(text, "action_candidates", listing)
    return _check_length(text, prompt_max_len)


# --- remote calls -------------------------------------------------------------------

def _auth_token(cfg: EndpointConfig) -> str:
    token = os.environ.get(cfg.auth_env)
    if not token:
        raise AuthMissing(f"environment variable {cfg.auth_env} is not set")
    return token


def query_model(cfg: EndpointConfig, prompt: str) -> str:
    """One chat-completion request (single user message, no system prompt).

    Retries transient failures (timeouts, connection errors, 5xx) with
    exponential backoff; 4xx statuses fail immediately.
    """
    token = _auth_token(cfg)
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "max_tokens": cfg.generate_max_len,
        "temperature": cfg.temperature,
    }
    headers = {"Authorization": f"Bearer {token}",
               "Content-Type": "application/json"}
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt and cfg.backoff_s:
            time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
        try:
            resp = requests.post(url, json=payload, headers=headers,
                                 timeout=cfg.timeout_s)
        except requests.Timeout as e:
            last = RequestTimeout(f"timed out after {cfg.timeout_s}s")
            continue
        except requests.ConnectionError as e:
            last = GatewayError(f"connection failed: {e}")
            continue
        if 500 <= resp.status_code < 600:
            last = HttpStatus(resp.status_code, resp.text)
            continue
        if resp.status_code != 200:
            raise HttpStatus(resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise HttpStatus(200, f"malformed completion body: {e}") from e
    raise RetriesExhausted(cfg.max_retries + 1, last)


# --- dataset evaluation ----------------------------------------------------------------

def _provenance_key(tr: WiaTriplet) -> str:
    return f"{tr.provenance[0]}:{tr.provenance[1]}"


def _load_results(path) -> dict[str, dict]:
    done = {}
    if path and os.path.exists(path):
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    done[rec["provenance_key"]] = rec
    return done


def evaluate_remote(dataset: list[WiaTriplet], cfg: EndpointConfig,
                    spec: RewardSpec | None = None,
                    out_path: str | None = None) -> list[dict]:
    """Score each triplet via the endpoint; resumable and order-stable.

    Per sample: render the forecast prompt, query, extract the answer, score
    against the truth delta. Per-sample failures (network or extraction)
    score 0 with a diagnostic tag; only missing auth aborts the run. Results
    are returned in dataset order and, when ``out_path`` is given, written as
    line-delimited records sorted by provenance key.
    """
    spec = spec or RewardSpec()
    _auth_token(cfg)  # abort early, before any network traffic
    done = _load_results(out_path)
    lock = threading.Lock()
    results: dict[str, dict] = dict(done)

    def run_one(tr: WiaTriplet) -> dict:
        key = _provenance_key(tr)
        rec = {"provenance_key": key,
               "provenance": {"match": tr.provenance[0],
                              "index": tr.provenance[1]},
               "reward": 0.0, "key_scores": [], "raw_answer_hash": None,
               "failure": None}
        try:
            prompt = render_forecast_prompt(tr.state, tr.action, tr.horizon_s,
                                            cfg.prompt_max_len)
            completion = query_model(cfg, prompt)
        except AuthMissing:
            raise
        except GatewayError as e:
            rec["failure"] = type(e).__name__
            return rec
        rec["raw_answer_hash"] = hashlib.sha256(
            completion.encode("utf-8")).hexdigest()
        scored = batch_reward([completion], tr.delta, spec)[0]
        rec["reward"] = scored.reward
        rec["failure"] = scored.failure
        rec["key_scores"] = [{"key": ks.key, "score": ks.score,
                              "rationale": ks.rationale}
                             for ks in scored.key_scores]
        return rec

    todo = [tr for tr in dataset if _provenance_key(tr) not in done]
    if todo:
        with ThreadPoolExecutor(max_workers=max(1, cfg.concurrency)) as pool:
            for rec in pool.map(run_one, todo):
                with lock:
                    results[rec["provenance_key"]] = rec
                    if out_path:
                        with open(out_path, "a", encoding="utf-8") as f:
                            f.write(json.dumps(rec, sort_keys=True) + "\n")
    if out_path and todo:
        # deterministic merge: rewrite sorted by provenance key
        with open(out_path, "w", encoding="utf-8") as f:
            for key in sorted(results):
                f.write(json.dumps(results[key], sort_keys=True) + "\n")
    return [results[_provenance_key(tr)] for tr in dataset]
