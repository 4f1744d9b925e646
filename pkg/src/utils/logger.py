# src/utils/logger.py
import json
import os
import datetime
from typing import Any, Dict, Optional

LEVELS = {"DEBUG": 10, "INFO": 20, "WARN": 30, "ERROR": 40}


def _logs_dir() -> str:
    # read at construction time so run.py can redirect via the environment
    return os.environ.get("SPARSEDEP_LOG_DIR", "logs")


def _min_level() -> int:
    return LEVELS.get(os.environ.get("SPARSEDEP_LOG_LEVEL", "DEBUG").upper(), 10)


def _ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)


def _now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class AgentLogger:
    """
    JSONL logger per agent, per run id.
    Usage:
        lg = AgentLogger("AnalysisAgent", run_id="20251201_120000")
        lg.info("start", "analyze_corpus starting", {"files": 8})
    This writes lines to: logs/AnalysisAgent_20251201_120000.jsonl
    """
    def __init__(self, agent_name: str, run_id: Optional[str] = None):
        logs_dir = _logs_dir()
        _ensure_dir(logs_dir)
        ts = run_id or datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%d_%H%M%S")
        self.agent = agent_name.replace(" ", "_")
        self.path = os.path.join(logs_dir, f"{self.agent}_{ts}.jsonl")
        self.min_level = _min_level()
        open(self.path, "a").close()

    def _emit(self, level: str, event: str, message: str, metadata: Optional[Dict[str, Any]] = None):
        if LEVELS[level] < self.min_level:
            return
        entry = {
            "ts": _now_iso(),
            "level": level,
            "agent": self.agent,
            "event": event,
            "message": message,
            "metadata": metadata or {},
        }
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(entry, default=str, ensure_ascii=False) + "\n")

    def info(self, event: str, message: str, metadata: Optional[Dict[str, Any]] = None):
        self._emit("INFO", event, message, metadata)

    def warn(self, event: str, message: str, metadata: Optional[Dict[str, Any]] = None):
        self._emit("WARN", event, message, metadata)

    def error(self, event: str, message: str, metadata: Optional[Dict[str, Any]] = None):
        self._emit("ERROR", event, message, metadata)

    def debug(self, event: str, message: str, metadata: Optional[Dict[str, Any]] = None):
        self._emit("DEBUG", event, message, metadata)
