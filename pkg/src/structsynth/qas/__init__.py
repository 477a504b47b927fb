"""A small indentation-delimited scripting language over design-database APIs.

Public surface: parse / Script / SyntaxFailure, the normalizing serializer,
statement-set normalization for similarity measures, and type inference.
"""

from .analysis import (
    BUILTINS,
    AttributeRead,
    BuiltinCall,
    CallSite,
    EnumRef,
    TypedScript,
    UndefinedUse,
    infer_types,
    normalize_statements,
)
from .parser import Script, SyntaxFailure, SyntaxIssue, parse
from . import nodes

__all__ = [
    "BUILTINS",
    "AttributeRead",
    "BuiltinCall",
    "CallSite",
    "EnumRef",
    "Script",
    "SyntaxFailure",
    "SyntaxIssue",
    "TypedScript",
    "UndefinedUse",
    "infer_types",
    "nodes",
    "normalize_statements",
    "parse",
]
