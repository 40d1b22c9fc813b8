"""Unit registry and conversion.

Built-in table: the SI prefixes applied to the base symbols g, m, s, K, A,
mol, V, Pa and J, plus the affine Celsius/Kelvin pair. Users can extend the
registry from a two-column text file (see :meth:`UnitRegistry.load_file`).

Conversion is linear-affine: ``base_value = scale * value + offset``. Two
units are compatible when they share a base symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IncompatibleDimensionError, UnknownUnitError

BASE_SYMBOLS = ("g", "m", "s", "K", "A", "mol", "V", "Pa", "J")

SI_PREFIXES = {
    "y": 1e-24, "z": 1e-21, "a": 1e-18, "f": 1e-15, "p": 1e-12,
    "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "c": 1e-2, "d": 1e-1,
    "da": 1e1, "h": 1e2, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
    "P": 1e15, "E": 1e18, "Z": 1e21, "Y": 1e24,
}


@dataclass(frozen=True)
class UnitDef:
    symbol: str
    base: str
    scale: float
    offset: float = 0.0


def _builtin_units() -> dict[str, UnitDef]:
    units: dict[str, UnitDef] = {}
    for base in BASE_SYMBOLS:
        units[base] = UnitDef(base, base, 1.0)
        for prefix, factor in SI_PREFIXES.items():
            sym = prefix + base
            # Prefixed forms never shadow a base symbol ("das" vs "s" etc.).
            if sym not in BASE_SYMBOLS:
                units[sym] = UnitDef(sym, base, factor)
    units["°C"] = UnitDef("°C", "K", 1.0, 273.15)
    units["degC"] = UnitDef("degC", "K", 1.0, 273.15)
    return units


class UnitRegistry:
    """Mutable symbol table mapping unit symbols to scale/offset over a base."""

    def __init__(self):
        self._units = _builtin_units()

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._units

    def lookup(self, symbol: str) -> UnitDef:
        try:
            return self._units[symbol]
        except KeyError:
            raise UnknownUnitError(f"unit {symbol!r} is not registered", unit=symbol) from None

    def register(self, symbol: str, base: str, scale: float, offset: float = 0.0):
        if base not in BASE_SYMBOLS:
            raise UnknownUnitError(f"base {base!r} is not a registered base symbol", unit=base)
        if scale <= 0:
            raise ValueError(f"scale for {symbol!r} must be positive")
        self._units[symbol] = UnitDef(symbol, base, float(scale), float(offset))

    def load_file(self, path):
        """Extend the registry from ``symbol,factor-or-affine`` lines.

        The second column is either ``<factor> <base>`` or
        ``<factor> <base> + <offset>``, e.g.::

            lb,453.59237 g
            degF,0.5555555555555556 K + 255.37222222222223

        Blank lines and lines starting with ``#`` are ignored.
        """
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    symbol, spec = line.split(",", 1)
                    offset = 0.0
                    if "+" in spec:
                        linear, offset_str = spec.rsplit("+", 1)
                        offset = float(offset_str)
                    else:
                        linear = spec
                    factor_str, base = linear.split()
                    self.register(symbol.strip(), base.strip(), float(factor_str), offset)
                except (ValueError, UnknownUnitError) as exc:
                    raise UnknownUnitError(
                        f"bad unit registry line {lineno}: {line!r} ({exc})", line=lineno
                    ) from None

    def convert(self, value: float, from_unit: str, to_unit: str) -> float:
        src = self.lookup(from_unit)
        dst = self.lookup(to_unit)
        if src.base != dst.base:
            raise IncompatibleDimensionError(
                f"cannot convert {from_unit!r} ({src.base}) to {to_unit!r} ({dst.base})",
                from_unit=from_unit,
                to_unit=to_unit,
            )
        base_value = src.scale * float(value) + src.offset
        return (base_value - dst.offset) / dst.scale

    def compatible(self, from_unit: str, to_unit: str) -> bool:
        return self.lookup(from_unit).base == self.lookup(to_unit).base

    def symbols(self) -> list[str]:
        return sorted(self._units)


DEFAULT_REGISTRY = UnitRegistry()


def convert_unit(value: float, from_unit: str, to_unit: str,
                 registry: UnitRegistry | None = None) -> float:
    """Convert ``value`` between two registered, dimensionally compatible units."""
    return (registry or DEFAULT_REGISTRY).convert(value, from_unit, to_unit)
