"""Field expression language: parsing, jets, symbolic derivatives, compiled evaluation."""

from .ast import BinOp, Call, Expr, Neg, Num, Var, is_constant, to_source, variables
from .compiled import CompiledFields, Program, compile_exprs
from .jet import FieldDomainError, Jet2, eval_jet2, evaluate
from .parser import ExprSyntaxError, parse
from .symbolic import diff, substitute

__all__ = [
    "BinOp", "Call", "CompiledFields", "Expr", "ExprSyntaxError", "FieldDomainError", "Jet2",
    "Neg", "Num", "Program", "Var", "compile_exprs", "diff", "eval_jet2", "evaluate",
    "is_constant", "parse", "substitute", "to_source", "variables",
]
