"""
DRACO - Package Resource Helper.

Reads package data (the published JSON schemas) in both source checkouts
and installed wheels through importlib.resources.
"""

import json
from importlib.resources import files
from typing import Any, Dict

SCHEMA_PACKAGE = 'draco.schemas'


def read_resource_text(package: str, resource_name: str) -> str:
    """
    Read a text resource directly into memory.

    Example:
        text = read_resource_text('draco.schemas', 'train.schema.json')
    """
    return files(package).joinpath(resource_name).read_text(encoding='utf-8')


def load_schema(kind: str) -> Dict[str, Any]:
    """Load the published JSON schema for a config kind ('train', 'synth', ...)."""
    return json.loads(read_resource_text(SCHEMA_PACKAGE, f"{kind}.schema.json"))
