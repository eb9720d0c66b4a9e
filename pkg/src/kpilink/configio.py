"""Plain key = value configuration files (INI sections [train], [generate]).

Command-line flags override file values; the effective configuration is
echoed into the header of every artifact a command writes, and its SHA-256
hash ties checkpoints to the configuration that produced them.
"""

from __future__ import annotations

import configparser
import hashlib

from .corpus import GeneratorConfig
from .errors import ConfigError
from .ioutil import atomic_open

TRAIN_SECTION = "train"
GENERATE_SECTION = "generate"

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def parse_bool(text):
    low = str(text).strip().lower()
    if low in _BOOL_TRUE:
        return True
    if low in _BOOL_FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_optional_float(text):
    low = str(text).strip().lower()
    if low in ("none", "null", ""):
        return None
    return float(text)


def read_config_file(path):
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    sections = {}
    for section in parser.sections():
        sections[section] = dict(parser.items(section))
    return sections


def config_echo(values, section=TRAIN_SECTION):
    lines = [f"[{section}]"]
    for key in sorted(values):
        lines.append(f"{key} = {values[key]}")
    return "\n".join(lines) + "\n"


def config_hash(values):
    blob = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_config_echo(path, values, section=TRAIN_SECTION):
    with atomic_open(path, "w") as fh:
        fh.write(config_echo(values, section))


def generator_config_from(values):
    """Build a GeneratorConfig from a [generate] mapping.

    Recognized keys: documents, sentences_per_document, weight_<template>,
    lexicon_<name> (comma-separated phrases).
    """
    config = GeneratorConfig()
    for key, raw in values.items():
        if key == "documents":
            config.documents = int(raw)
        elif key == "sentences_per_document":
            config.sentences_per_document = int(raw)
        elif key.startswith("weight_"):
            config.template_weights[key[len("weight_"):]] = float(raw)
        elif key.startswith("lexicon_"):
            phrases = tuple(p.strip() for p in raw.split(",") if p.strip())
            config.lexicons[key[len("lexicon_"):]] = phrases
        else:
            raise ConfigError(f"unknown generator option {key!r}")
    if config.documents < 1 or config.sentences_per_document < 1:
        raise ConfigError("generator needs at least one document and one sentence per document")
    return config
