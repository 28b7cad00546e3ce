"""Run configuration: bundled per-dataset defaults, TOML files, overrides.

Precedence, lowest to highest: bundled default for the dataset name,
user config file, explicit overrides (CLI flags). Relative paths inside a
config file resolve against that file's directory; overrides resolve
against the working directory.

Python 3.10 has no tomllib, so a small TOML-subset reader backs the file
format: tables, bare keys, strings, numbers, booleans, and single-line
arrays. That covers every bundled default and documented schema key;
tomllib takes over when the interpreter provides it.
"""

import copy
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:
    tomllib = None

from .errors import ConfigError, MalformedInputError
from .pipeline import TrainConfig

BUNDLED = ("cora", "citeseer", "pubmed", "blogcatalog", "flickr", "demo")

_SCHEMA = {
    "dataset": {"name", "edges", "attributes", "labels", "attribute_norm"},
    "train": {"p", "dim", "batch_size", "epochs", "lr", "gamma", "alpha",
              "restart_prob", "rounds", "seed", "variant", "share_views",
              "negative_mode", "inter_norm", "score_norm"},
    "injection": {"total", "clique_size", "candidate_pool"},
    "diffusion": {"method", "topk", "tol", "cache_dir"},
    "output": {"dir"},
    "sweep": {"p", "dim", "gamma"},
}


# ------------------------------------------------------------- toml subset

def _parse_scalar(raw, where):
    if raw.startswith('"'):
        if len(raw) < 2 or not raw.endswith('"'):
            raise MalformedInputError(f"{where}: unterminated string {raw!r}")
        body = raw[1:-1]
        out, i = [], 0
        while i < len(body):
            ch = body[i]
            if ch == '"':
                raise MalformedInputError(f"{where}: stray quote in {raw!r}")
            if ch == "\\":
                i += 1
                if i >= len(body):
                    raise MalformedInputError(f"{where}: dangling escape")
                esc = body[i]
                try:
                    out.append({'"': '"', "\\": "\\", "n": "\n",
                                "t": "\t"}[esc])
                except KeyError:
                    raise MalformedInputError(
                        f"{where}: unsupported escape \\{esc}") from None
            else:
                out.append(ch)
            i += 1
        return "".join(out)
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw, 10)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise MalformedInputError(f"{where}: cannot parse value {raw!r}") \
            from None


def _strip_comment(line):
    out = []
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
        i += 1
    return "".join(out).strip()


def parse_toml(text, where="<config>"):
    """Subset reader: tables, key = scalar | [scalars], # comments."""
    root = {}
    table = root
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        loc = f"{where}:{lineno}"
        line = _strip_comment(rawline)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise MalformedInputError(f"{loc}: malformed table header")
            table = root
            for part in line[1:-1].strip().split("."):
                if not part:
                    raise MalformedInputError(f"{loc}: empty table name")
                table = table.setdefault(part, {})
                if not isinstance(table, dict):
                    raise MalformedInputError(
                        f"{loc}: table name collides with a value")
            continue
        if "=" not in line:
            raise MalformedInputError(f"{loc}: expected key = value")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not key or not raw:
            raise MalformedInputError(f"{loc}: expected key = value")
        if raw.startswith("["):
            if not raw.endswith("]"):
                raise MalformedInputError(
                    f"{loc}: arrays must close on one line")
            inner = raw[1:-1].strip()
            value = [_parse_scalar(item.strip(), loc)
                     for item in _split_array(inner, loc)]
        else:
            value = _parse_scalar(raw, loc)
        if key in table:
            raise MalformedInputError(f"{loc}: duplicate key {key!r}")
        table[key] = value
    return root


def _split_array(inner, where):
    if not inner:
        return []
    items, depth_string, start = [], False, 0
    for i, ch in enumerate(inner):
        if ch == '"' and (i == 0 or inner[i - 1] != "\\"):
            depth_string = not depth_string
        elif ch == "," and not depth_string:
            items.append(inner[start:i])
            start = i + 1
    items.append(inner[start:])
    if any(not item.strip() for item in items):
        raise MalformedInputError(f"{where}: empty array element")
    return items


def _loads(text, where):
    if tomllib is not None:
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise MalformedInputError(f"{where}: {exc}") from exc
    return parse_toml(text, where)


# ----------------------------------------------------------------- merging

def _validate_sections(doc, where):
    for section, keys in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        if not isinstance(keys, dict):
            raise ConfigError(f"{where}: top-level keys must live in a "
                              f"section, got {section!r}")
        unknown = set(keys) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) "
                              f"{sorted(unknown)} in [{section}]")


def _merge(base, extra):
    out = copy.deepcopy(base)
    for section, keys in extra.items():
        out.setdefault(section, {}).update(copy.deepcopy(keys))
    return out


def _resolve_paths(doc, base_dir):
    ds = doc.get("dataset", {})
    for key in ("edges", "attributes", "labels"):
        if key in ds and ds[key] and not os.path.isabs(ds[key]):
            ds[key] = os.path.normpath(os.path.join(base_dir, ds[key]))
    diff = doc.get("diffusion", {})
    if diff.get("cache_dir") and not os.path.isabs(diff["cache_dir"]):
        diff["cache_dir"] = os.path.normpath(
            os.path.join(base_dir, diff["cache_dir"]))
    out = doc.get("output", {})
    if out.get("dir") and not os.path.isabs(out["dir"]):
        out["dir"] = os.path.normpath(os.path.join(base_dir, out["dir"]))


def bundled_default(name):
    """Parsed bundled config for a known dataset name, or None."""
    if name not in BUNDLED:
        return None
    path = resources.files("subcr").joinpath(f"defaults/{name}.toml")
    return _loads(path.read_text(), f"defaults/{name}.toml")


# --------------------------------------------------------------- final form

@dataclass
class RunConfig:
    dataset: str
    edges_path: str
    attributes_path: str
    labels_path: Optional[str]
    attribute_norm: str
    train: TrainConfig
    injection_total: int
    clique_size: int
    candidate_pool: int
    diffusion_method: str
    diffusion_topk: int
    diffusion_tol: float
    cache_dir: str
    out_dir: str
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.diffusion_method not in ("auto", "dense", "iterative"):
            raise ConfigError(
                f"diffusion method must be auto, dense, or iterative, "
                f"got {self.diffusion_method!r}")
        if self.diffusion_topk < 0:
            raise ConfigError(f"diffusion topk must be >= 0, "
                              f"got {self.diffusion_topk}")
        if self.attribute_norm not in ("none", "row_l1"):
            raise ConfigError(f"attribute_norm must be none or row_l1, "
                              f"got {self.attribute_norm!r}")
        for key, grid in self.sweep.items():
            if not isinstance(grid, list) or not grid:
                raise ConfigError(f"sweep grid {key} must be a non-empty list")


def _coerced(value, like, section, key):
    if isinstance(like, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a boolean")
        return value
    if isinstance(like, float) and isinstance(value, int) \
            and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, type(like)):
        raise ConfigError(f"[{section}] {key} must be "
                          f"{type(like).__name__}, got {value!r}")
    return value


def build_run_config(doc, where="<config>"):
    """Turn a merged config document into a validated RunConfig."""
    _validate_sections(doc, where)
    ds = doc.get("dataset", {})
    name = ds.get("name", "")
    if not name:
        raise ConfigError(f"{where}: dataset name is required "
                          "(set [dataset] name or pass --dataset)")

    train_doc = dict(doc.get("train", {}))
    defaults = TrainConfig(dataset=name)
    kwargs = {"dataset": name}
    for key, value in train_doc.items():
        kwargs[key] = _coerced(value, getattr(defaults, key), "train", key)
    train = TrainConfig(**kwargs)

    inj = doc.get("injection", {})
    diff = doc.get("diffusion", {})
    cache_dir = diff.get("cache_dir", "") or os.environ.get(
        "SUBCR_CACHE_DIR", "")
    sweep = {k: list(v) for k, v in doc.get("sweep", {}).items()}
    return RunConfig(
        dataset=name,
        edges_path=ds.get("edges", ""),
        attributes_path=ds.get("attributes", ""),
        labels_path=ds.get("labels") or None,
        attribute_norm=ds.get("attribute_norm", "none"),
        train=train,
        injection_total=int(inj.get("total", 0)),
        clique_size=int(inj.get("clique_size", 15)),
        candidate_pool=int(inj.get("candidate_pool", 50)),
        diffusion_method=diff.get("method", "auto"),
        diffusion_topk=int(diff.get("topk", 128)),
        diffusion_tol=float(diff.get("tol", 1e-10)),
        cache_dir=cache_dir,
        out_dir=doc.get("output", {}).get("dir", ""),
        sweep=sweep,
    )


def load_run_config(config_path=None, dataset=None, overrides=None):
    """Assemble the effective RunConfig from defaults, file, and overrides."""
    overrides = overrides or {}
    file_doc = {}
    if config_path is not None:
        try:
            with open(config_path) as fh:
                text = fh.read()
        except OSError as exc:
            raise MalformedInputError(
                f"cannot read config {config_path}: {exc}") from exc
        file_doc = _loads(text, str(config_path))
        _validate_sections(file_doc, str(config_path))
        _resolve_paths(file_doc, os.path.dirname(os.path.abspath(
            str(config_path))))
    _validate_sections(overrides, "<flags>")

    name = (overrides.get("dataset", {}).get("name")
            or file_doc.get("dataset", {}).get("name")
            or dataset)
    if not name:
        raise ConfigError("no dataset selected: pass --dataset or set "
                          "[dataset] name in the config file")
    doc = bundled_default(name) or {"dataset": {"name": name}}
    doc = _merge(doc, file_doc)
    doc = _merge(doc, overrides)
    doc.setdefault("dataset", {})["name"] = name
    if not doc.get("output", {}).get("dir"):
        doc.setdefault("output", {})["dir"] = os.path.join("runs", name)
    return build_run_config(doc, where=str(config_path or f"<{name}>"))


def effective_dict(rc):
    """JSON-ready echo of the effective configuration."""
    train = {f: getattr(rc.train, f) for f in (
        "p", "dim", "batch_size", "epochs", "lr", "gamma", "alpha",
        "restart_prob", "rounds", "seed", "variant", "share_views",
        "negative_mode", "inter_norm", "score_norm")}
    return {
        "dataset": {"name": rc.dataset, "edges": rc.edges_path,
                    "attributes": rc.attributes_path,
                    "labels": rc.labels_path or "",
                    "attribute_norm": rc.attribute_norm},
        "train": train,
        "injection": {"total": rc.injection_total,
                      "clique_size": rc.clique_size,
                      "candidate_pool": rc.candidate_pool},
        "diffusion": {"method": rc.diffusion_method,
                      "topk": rc.diffusion_topk,
                      "tol": rc.diffusion_tol,
                      "cache_dir": rc.cache_dir},
        "output": {"dir": rc.out_dir},
    }
