from .parsing import Ast, AstNode, SyntaxFailure, parse_subject, check_syntax
from .codebleu import CodeBleuConfig, codebleu, ast_match, dataflow_match, tokenize_code
from .jaccard import jaccard_ast
from .runner import TestCase, TestRunConfig, EnvironmentFailure, run_tests, normalize_output
from .features import FeatureVector, build_feature_vector

__all__ = [
    "Ast",
    "AstNode",
    "SyntaxFailure",
    "parse_subject",
    "check_syntax",
    "CodeBleuConfig",
    "codebleu",
    "ast_match",
    "dataflow_match",
    "tokenize_code",
    "jaccard_ast",
    "TestCase",
    "TestRunConfig",
    "EnvironmentFailure",
    "run_tests",
    "normalize_output",
    "FeatureVector",
    "build_feature_vector",
]
