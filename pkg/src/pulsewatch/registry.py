"""Typed tool registry: the agent's only route to signals, memory, knowledge.

Every handler call goes through `invoke`, which validates arguments against
the declared schema, converts every failure mode into a structured error
result, and post-validates that ok payloads carry the declared required
output fields. `invoke` never raises for handler-side problems.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import RegistrationError

TOOL_CATEGORIES = (
    "signal_analysis",
    "dataset_processing",
    "record_lookup",
    "proactive_context",
    "medical_knowledge",
    "state_access",
)
OUTPUT_KINDS = ("data", "metadata", "state", "evidence", "explanation")

_TYPE_CHECKS: dict[str, tuple] = {
    "string": (str,),
    "number": (int, float),
    "integer": (int,),
    "boolean": (bool,),
}


@dataclass(frozen=True)
class ArgSpec:
    type: str = "string"
    required: bool = True
    description: str = ""

    def to_dict(self) -> dict:
        return {"type": self.type, "required": self.required, "description": self.description}


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    category: str
    description: str
    arg_schema: dict[str, ArgSpec] = field(default_factory=dict)
    output_kind: str = "data"
    required_output_fields: tuple[str, ...] = ()
    benchmark_only: bool = False

    def validate(self) -> None:
        if self.category not in TOOL_CATEGORIES:
            raise RegistrationError(f"unknown category {self.category!r}")
        if self.output_kind not in OUTPUT_KINDS:
            raise RegistrationError(f"unknown output_kind {self.output_kind!r}")
        if not self.required_output_fields:
            raise RegistrationError(f"tool {self.name!r} declares no required output fields")
        for arg, spec in self.arg_schema.items():
            if spec.type not in _TYPE_CHECKS:
                raise RegistrationError(f"{self.name}.{arg}: unknown arg type {spec.type!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "category": self.category,
            "description": self.description,
            "arg_schema": {k: v.to_dict() for k, v in self.arg_schema.items()},
            "output_kind": self.output_kind,
            "required_output_fields": list(self.required_output_fields),
            "benchmark_only": self.benchmark_only,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolDescriptor":
        return cls(
            name=d["name"],
            category=d["category"],
            description=d["description"],
            arg_schema={k: ArgSpec(**v) for k, v in d.get("arg_schema", {}).items()},
            output_kind=d.get("output_kind", "data"),
            required_output_fields=tuple(d.get("required_output_fields", ())),
            benchmark_only=bool(d.get("benchmark_only", False)),
        )


@dataclass
class ToolResult:
    tool_name: str
    status: str  # ok | error
    payload: dict | None = None
    error_code: str | None = None
    message: str | None = None
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"tool_name": self.tool_name, "status": self.status}
        if self.ok:
            out["payload"] = self.payload
        else:
            out["error_code"] = self.error_code
            out["message"] = self.message
        out["elapsed_ms"] = self.elapsed_ms
        return out


class ToolError(Exception):
    """Raised by handlers for anticipated failures; carries an error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


Handler = Callable[..., dict]


class ToolRegistry:
    """Name -> (descriptor, handler) map.

    Intended use is register-everything-then-freeze: after startup the
    registry is only read, so concurrent invoke calls are safe; handlers that
    touch per-patient memory follow that module's single-writer rule.
    """

    def __init__(self):
        self._tools: dict[str, tuple[ToolDescriptor, Handler]] = {}

    def register(self, descriptor: ToolDescriptor, handler: Handler) -> None:
        descriptor.validate()
        if descriptor.name in self._tools:
            raise RegistrationError(f"duplicate tool name {descriptor.name!r}")
        self._tools[descriptor.name] = (descriptor, handler)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def descriptor(self, name: str) -> ToolDescriptor | None:
        entry = self._tools.get(name)
        return entry[0] if entry else None

    def list_tools(self, category: str | None = None) -> list[ToolDescriptor]:
        """Descriptors sorted by name, optionally filtered by category."""
        out = [d for d, _ in self._tools.values() if category is None or d.category == category]
        return sorted(out, key=lambda d: d.name)

    def planner_tools(self) -> list[ToolDescriptor]:
        """The allowed list shown to planners: everything not benchmark-only."""
        return [d for d in self.list_tools() if not d.benchmark_only]

    def schema_export(self, planner_only: bool = False) -> dict:
        """Machine-readable registry, embeddable in planner prompts."""
        tools = self.planner_tools() if planner_only else self.list_tools()
        return {"tools": [d.to_dict() for d in tools]}

    def invoke(self, name: str, args: dict, context=None) -> ToolResult:
        """Dispatch one call; total — every failure is a structured error."""
        t0 = time.perf_counter()

        def done(result: ToolResult) -> ToolResult:
            result.elapsed_ms = (time.perf_counter() - t0) * 1000.0
            return result

        entry = self._tools.get(name)
        if entry is None:
            return done(ToolResult(name, "error", error_code="unknown_tool",
                                   message=f"no tool named {name!r}"))
        descriptor, handler = entry

        problems = _validate_args(descriptor, args)
        if problems:
            return done(ToolResult(name, "error", error_code="invalid_args",
                                   message="; ".join(problems)))
        try:
            payload = handler(context, **args)
        except ToolError as exc:
            return done(ToolResult(name, "error", error_code=exc.code, message=str(exc)))
        except Exception as exc:  # noqa: BLE001 - handler faults become results
            return done(ToolResult(name, "error", error_code="tool_failure",
                                   message=f"{type(exc).__name__}: {exc}"))
        if not isinstance(payload, dict):
            return done(ToolResult(name, "error", error_code="tool_failure",
                                   message="handler returned a non-dict payload"))
        missing = [f for f in descriptor.required_output_fields if f not in payload]
        if missing:
            return done(ToolResult(
                name, "error", error_code="missing_output_fields",
                message=f"payload missing required fields: {', '.join(missing)}",
            ))
        return done(ToolResult(name, "ok", payload=payload))


def _validate_args(descriptor: ToolDescriptor, args: dict) -> list[str]:
    problems = []
    for arg_name, spec in descriptor.arg_schema.items():
        if arg_name not in args:
            if spec.required:
                problems.append(f"missing required arg {arg_name!r}")
            continue
        value = args[arg_name]
        if value is None:
            if spec.required:
                problems.append(f"arg {arg_name!r} must not be null")
            continue
        expected = _TYPE_CHECKS[spec.type]
        if spec.type == "number" and isinstance(value, bool):
            problems.append(f"arg {arg_name!r} must be a number")
        elif not isinstance(value, expected):
            problems.append(f"arg {arg_name!r} must be of type {spec.type}")
    for extra in set(args) - set(descriptor.arg_schema):
        problems.append(f"unknown arg {extra!r}")
    return problems


def registry_from_export(export: dict) -> list[ToolDescriptor]:
    """Inverse of schema_export for round-trip checks (descriptors only)."""
    return [ToolDescriptor.from_dict(d) for d in export["tools"]]
