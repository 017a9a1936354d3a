"""Asset catalog: the closed set of box-shaped things a scene can contain.

The catalog is static data (data/assets.json).  Annotations (receptacle,
grabbable, openable, floor/surface placement) are curated by hand rather than
produced by a model; the rest of the package only ever sees AssetSpec values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .geometry import Vec3

GRABBABLE_MAX_VOLUME = 0.125  # m^3, full extents


@dataclass(frozen=True)
class AssetSpec:
    name: str
    category: str
    half_extents: Vec3
    is_receptacle: bool
    is_grabbable: bool
    is_openable: bool
    placement: str  # "floor" | "surface"
    color: tuple[int, int, int]

    def __post_init__(self):
        he = self.half_extents
        if not (he.x > 0 and he.y > 0 and he.z > 0):
            raise ValueError(f"asset {self.name}: half_extents must be positive")
        if self.placement not in ("floor", "surface"):
            raise ValueError(f"asset {self.name}: bad placement {self.placement!r}")
        if self.is_grabbable:
            volume = 8.0 * he.x * he.y * he.z
            if volume > GRABBABLE_MAX_VOLUME:
                raise ValueError(f"asset {self.name}: grabbable volume {volume:.4f} m^3 "
                                 f"exceeds {GRABBABLE_MAX_VOLUME}")

    @property
    def display_name(self) -> str:
        """Human name used in instructions and spoken answers."""
        return self.category.replace("_", " ")


class AssetCatalog:
    """Name-indexed, immutable collection of AssetSpec."""

    def __init__(self, specs: list[AssetSpec]):
        self._by_name: dict[str, AssetSpec] = {}
        for spec in specs:
            if spec.name in self._by_name:
                raise ValueError(f"duplicate asset name {spec.name!r}")
            self._by_name[spec.name] = spec

    def __len__(self) -> int:
        return len(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def get(self, name: str) -> AssetSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown asset {name!r}") from None

    def names(self) -> list[str]:
        return list(self._by_name)

    def all(self) -> list[AssetSpec]:
        return list(self._by_name.values())

    def select(self, *, receptacle: bool | None = None, grabbable: bool | None = None,
               openable: bool | None = None, placement: str | None = None) -> list[AssetSpec]:
        out = []
        for spec in self._by_name.values():
            if receptacle is not None and spec.is_receptacle != receptacle:
                continue
            if grabbable is not None and spec.is_grabbable != grabbable:
                continue
            if openable is not None and spec.is_openable != openable:
                continue
            if placement is not None and spec.placement != placement:
                continue
            out.append(spec)
        return out


def load_catalog(path: str | Path) -> AssetCatalog:
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    return _catalog_from_records(records)


def _catalog_from_records(records: list[dict]) -> AssetCatalog:
    specs = []
    for rec in records:
        specs.append(AssetSpec(
            name=rec["name"],
            category=rec["category"],
            half_extents=Vec3(*rec["half_extents"]),
            is_receptacle=rec["is_receptacle"],
            is_grabbable=rec["is_grabbable"],
            is_openable=rec["is_openable"],
            placement=rec["placement"],
            color=tuple(rec["color"]),
        ))
    return AssetCatalog(specs)


_default: AssetCatalog | None = None


def default_catalog() -> AssetCatalog:
    """The catalog shipped with the package, loaded once."""
    global _default
    if _default is None:
        text = resources.files("boxworld").joinpath("data/assets.json").read_text("utf-8")
        _default = _catalog_from_records(json.loads(text))
    return _default
