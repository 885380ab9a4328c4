"""Estimator plumbing: a small get_params/set_params mixin in the sklearn style."""

from __future__ import annotations

import inspect


class ParamsMixin:
    """Expose constructor arguments as params, mirroring sklearn estimators.

    Subclasses must store every ``__init__`` keyword under an attribute of
    the same name. ``get_params``/``set_params`` then work without any
    per-class bookkeeping, which keeps the estimators compatible with
    sklearn-style tooling (grid search over simple params, cloning by
    ``type(est)(**est.get_params())``).
    """

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"
