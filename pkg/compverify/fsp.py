#!/usr/bin/env python3
"""
FSP-subset Frontend
Parser, elaborator and printer for the process-algebra notation used to write
Controller, Dynamics and perception models.

Supported: const and range declarations, process equations with local
processes and parameters, action prefix, choice, guards, indexed labels with
bindings, ERROR, STOP, alphabet extension and composite processes.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedInput

from compverify.errors import (
    DuplicateProcessError, FspError, FspSyntaxError, IndexOutOfRangeError,
    UnboundIdentifierError,
)
from compverify.lts import ERR, TAU, Action, Lts, compose_all, explore, reachable, with_alphabet

logger = logging.getLogger(__name__)

FSP_GRAMMAR = r"""
start: statement*

?statement: const_decl | range_decl | process_def | composite_def

const_decl: "const" IDENT "=" expr
range_decl: "range" IDENT "=" expr ".." expr

process_def: UCID params? "=" body ("," local_def)* alpha_ext? "."
local_def: UCID params? "=" body
params: param+
param: "[" IDENT ":" range_spec "]"

body: "(" choice ")"
    | proc_ref

choice: term ("|" term)*
term: guard? label ("->" label)* "->" proc_ref
guard: "when" "(" expr ")"

label: LCID index*
?index: "[" IDENT ":" range_spec "]"   -> binding
      | "[" expr ".." expr "]"         -> anon_range
      | "[" expr "]"                   -> index_expr

?range_spec: IDENT                     -> named_range
           | expr ".." expr            -> literal_range

proc_ref: UCID ("[" expr "]")*

alpha_ext: "+" "{" [label ("," label)*] "}"

composite_def: "||" UCID "=" "(" UCID ("||" UCID)* ")" "."

?expr: or_expr
     | or_expr "?" expr ":" expr       -> ternary

?or_expr: and_expr
        | or_expr "||" and_expr        -> or_

?and_expr: eq_expr
         | and_expr "&&" eq_expr       -> and_

?eq_expr: rel_expr
        | eq_expr "==" rel_expr        -> eq
        | eq_expr "!=" rel_expr        -> ne

?rel_expr: add_expr
         | rel_expr "<" add_expr       -> lt
         | rel_expr "<=" add_expr      -> le
         | rel_expr ">" add_expr       -> gt
         | rel_expr ">=" add_expr      -> ge

?add_expr: mul_expr
         | add_expr "+" mul_expr       -> add
         | add_expr "-" mul_expr       -> sub

?mul_expr: unary
         | mul_expr "*" unary          -> mul
         | mul_expr "/" unary          -> div
         | mul_expr "%" unary          -> mod

?unary: atom
      | "-" unary                      -> neg
      | "!" unary                      -> not_

?atom: INT                             -> number
     | IDENT                           -> var
     | "(" expr ")"

UCID: /[A-Z][A-Za-z0-9_]*/
LCID: /[a-z][A-Za-z0-9_]*/
IDENT: /[A-Za-z_][A-Za-z0-9_]*/
INT: /[0-9]+/

LINE_COMMENT: /\/\/[^\n]*/
BLOCK_COMMENT: /\/\*(.|\n)*?\*\//

%import common.WS
%ignore WS
%ignore LINE_COMMENT
%ignore BLOCK_COMMENT
"""

ERROR_REF = "ERROR"
STOP_REF = "STOP"


@lru_cache(maxsize=1)
def get_parser() -> Lark:
    return Lark(FSP_GRAMMAR, propagate_positions=True)


# ==================== SYNTAX TREE ====================

Pos = Tuple[Optional[int], Optional[int]]


class Expr:
    pos: Pos = (None, None)

    def evaluate(self, env: Dict[str, int]) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Expr):
    value: int

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: Pos = (None, None)

    def evaluate(self, env):
        if self.name not in env:
            raise UnboundIdentifierError(self.name, *self.pos)
        return env[self.name]


def _div(a: int, b: int, pos: Pos) -> int:
    if b == 0:
        raise FspError("Division by zero", *pos)
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _mod(a: int, b: int, pos: Pos) -> int:
    return a - b * _div(a, b, pos)


_ARITH = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "lt": lambda a, b: int(a < b),
    "le": lambda a, b: int(a <= b),
    "gt": lambda a, b: int(a > b),
    "ge": lambda a, b: int(a >= b),
    "eq": lambda a, b: int(a == b),
    "ne": lambda a, b: int(a != b),
}


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    pos: Pos = (None, None)

    def evaluate(self, env):
        a = self.left.evaluate(env)
        if self.op == "and_":
            return int(bool(a) and bool(self.right.evaluate(env)))
        if self.op == "or_":
            return int(bool(a) or bool(self.right.evaluate(env)))
        b = self.right.evaluate(env)
        if self.op == "div":
            return _div(a, b, self.pos)
        if self.op == "mod":
            return _mod(a, b, self.pos)
        return _ARITH[self.op](a, b)


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    operand: Expr

    def evaluate(self, env):
        value = self.operand.evaluate(env)
        return -value if self.op == "neg" else int(not value)


@dataclass(frozen=True)
class Conditional(Expr):
    test: Expr
    then: Expr
    otherwise: Expr

    def evaluate(self, env):
        return self.then.evaluate(env) if self.test.evaluate(env) else self.otherwise.evaluate(env)


@dataclass(frozen=True)
class NamedRange:
    name: str
    pos: Pos


@dataclass(frozen=True)
class LiteralRange:
    lo: Expr
    hi: Expr


RangeSpec = Union[NamedRange, LiteralRange]


@dataclass(frozen=True)
class IndexExpr:
    expr: Expr


@dataclass(frozen=True)
class IndexBinding:
    var: str
    range: RangeSpec


@dataclass(frozen=True)
class IndexRange:
    range: RangeSpec


Index = Union[IndexExpr, IndexBinding, IndexRange]


@dataclass(frozen=True)
class Label:
    base: str
    indices: Tuple[Index, ...]
    pos: Pos


@dataclass(frozen=True)
class ProcRef:
    name: str
    args: Tuple[Expr, ...]
    pos: Pos


@dataclass(frozen=True)
class Term:
    guard: Optional[Expr]
    labels: Tuple[Label, ...]
    target: ProcRef


@dataclass(frozen=True)
class LocalDef:
    name: str
    params: Tuple[Tuple[str, RangeSpec], ...]
    body: Union[Tuple[Term, ...], ProcRef]
    pos: Pos


@dataclass(frozen=True)
class ProcessDef:
    main: LocalDef
    locals: Tuple[LocalDef, ...]
    alphabet_ext: Tuple[Label, ...]


@dataclass(frozen=True)
class CompositeDef:
    name: str
    parts: Tuple[Tuple[str, Pos], ...]
    pos: Pos


# ==================== TREE WALK ====================

def _pos(node) -> Pos:
    if isinstance(node, Token):
        return node.line, node.column
    meta = getattr(node, "meta", None)
    if meta is not None and not meta.empty:
        return meta.line, meta.column
    return None, None


_BINARY_OPS = {"add", "sub", "mul", "div", "mod", "lt", "le", "gt", "ge", "eq", "ne", "and_", "or_"}


def _expr(node) -> Expr:
    kind = node.data
    if kind == "number":
        return Num(int(node.children[0]))
    if kind == "var":
        token = node.children[0]
        return Var(str(token), _pos(token))
    if kind in _BINARY_OPS:
        return Binary(kind, _expr(node.children[0]), _expr(node.children[1]), _pos(node))
    if kind in ("neg", "not_"):
        return Unary(kind, _expr(node.children[0]))
    if kind == "ternary":
        return Conditional(*(_expr(c) for c in node.children))
    raise FspError(f"Unexpected expression node {kind}", *_pos(node))


def _range_spec(node) -> RangeSpec:
    if node.data == "named_range":
        token = node.children[0]
        return NamedRange(str(token), _pos(token))
    return LiteralRange(_expr(node.children[0]), _expr(node.children[1]))


def _index(node) -> Index:
    if node.data == "binding":
        return IndexBinding(str(node.children[0]), _range_spec(node.children[1]))
    if node.data == "anon_range":
        return IndexRange(LiteralRange(_expr(node.children[0]), _expr(node.children[1])))
    return IndexExpr(_expr(node.children[0]))


def _label(node) -> Label:
    token = node.children[0]
    return Label(str(token), tuple(_index(c) for c in node.children[1:]), _pos(token))


def _proc_ref(node) -> ProcRef:
    token = node.children[0]
    return ProcRef(str(token), tuple(_expr(c) for c in node.children[1:]), _pos(token))


def _term(node) -> Term:
    children = list(node.children)
    guard = None
    if isinstance(children[0], Tree) and children[0].data == "guard":
        guard = _expr(children.pop(0).children[0])
    return Term(guard, tuple(_label(c) for c in children[:-1]), _proc_ref(children[-1]))


def _body(node):
    inner = node.children[0]
    if inner.data == "choice":
        return tuple(_term(t) for t in inner.children)
    return _proc_ref(inner)


def _local(node) -> LocalDef:
    token = node.children[0]
    params: List[Tuple[str, RangeSpec]] = []
    body = None
    for child in node.children[1:]:
        if child.data == "params":
            for param in child.children:
                params.append((str(param.children[0]), _range_spec(param.children[1])))
        elif child.data == "body":
            body = _body(child)
    return LocalDef(str(token), tuple(params), body, _pos(token))


def _process(node) -> ProcessDef:
    head = [c for c in node.children if not (isinstance(c, Tree) and c.data in ("local_def", "alpha_ext"))]
    main = _local(Tree("local_def", head, node.meta))
    locals_ = tuple(_local(c) for c in node.children if isinstance(c, Tree) and c.data == "local_def")
    ext: Tuple[Label, ...] = ()
    for c in node.children:
        if isinstance(c, Tree) and c.data == "alpha_ext":
            ext = tuple(_label(l) for l in c.children if l is not None)
    return ProcessDef(main, locals_, ext)


def _composite(node) -> CompositeDef:
    name, *parts = node.children
    return CompositeDef(str(name), tuple((str(p), _pos(p)) for p in parts), _pos(name))


# ==================== ELABORATION ====================

class Specification:
    """Declarations of one FSP text, elaborated on demand"""

    def __init__(self, text: str):
        try:
            tree = get_parser().parse(text)
        except UnexpectedInput as e:
            line, column = e.line, e.column
            if line is None or line < 0:
                lines = text.splitlines() or [""]
                line, column = len(lines), len(lines[-1]) + 1
            raise FspSyntaxError(f"Syntax error: {type(e).__name__}", line, column)

        self.consts: Dict[str, int] = {}
        self.ranges: Dict[str, Tuple[int, int]] = {}
        self.processes: Dict[str, ProcessDef] = {}
        self.composites: Dict[str, CompositeDef] = {}
        self._order: List[str] = []

        for node in tree.children:
            if node.data == "const_decl":
                name = str(node.children[0])
                self._check_fresh_value(name, node.children[0])
                self.consts[name] = _expr(node.children[1]).evaluate(self.consts)
            elif node.data == "range_decl":
                name = str(node.children[0])
                self._check_fresh_value(name, node.children[0])
                lo = _expr(node.children[1]).evaluate(self.consts)
                hi = _expr(node.children[2]).evaluate(self.consts)
                if lo > hi:
                    raise FspError(f"Empty range {name} = {lo}..{hi}", *_pos(node.children[0]))
                self.ranges[name] = (lo, hi)
            elif node.data == "process_def":
                proc = _process(node)
                self._check_fresh_process(proc.main.name, proc.main.pos)
                self.processes[proc.main.name] = proc
                self._order.append(proc.main.name)
            elif node.data == "composite_def":
                comp = _composite(node)
                self._check_fresh_process(comp.name, comp.pos)
                self.composites[comp.name] = comp
                self._order.append(comp.name)

    def _check_fresh_value(self, name: str, token: Token):
        if name in self.consts or name in self.ranges:
            raise FspError(f"Duplicate declaration '{name}'", *_pos(token))

    def _check_fresh_process(self, name: str, pos: Pos):
        if name in self.processes or name in self.composites:
            raise DuplicateProcessError(name, *pos)

    def range_bounds(self, spec: RangeSpec, env: Dict[str, int]) -> Tuple[int, int]:
        if isinstance(spec, NamedRange):
            if spec.name not in self.ranges:
                raise UnboundIdentifierError(spec.name, *spec.pos)
            return self.ranges[spec.name]
        lo, hi = spec.lo.evaluate(env), spec.hi.evaluate(env)
        if lo > hi:
            raise FspError(f"Empty range {lo}..{hi}")
        return lo, hi

    def elaborate_all(self) -> Dict[str, Lts]:
        results: Dict[str, Lts] = {}
        for name in self._order:
            if name in self.processes:
                results.update(self._elaborate_family(self.processes[name]))
        for name in self._order:
            if name in self.composites:
                self._elaborate_composite(name, results, ())
        return results

    def _elaborate_family(self, proc: ProcessDef) -> Dict[str, Lts]:
        params = proc.main.params
        if not params:
            return {proc.main.name: _ProcessElaborator(self, proc, ()).run()}
        family = {}
        bounds = [self.range_bounds(spec, self.consts) for _, spec in params]
        for args in product(*(range(lo, hi + 1) for lo, hi in bounds)):
            name = proc.main.name + "".join(f"[{a}]" for a in args)
            family[name] = _ProcessElaborator(self, proc, args).run()
        return family

    def _elaborate_composite(self, name: str, results: Dict[str, Lts], stack: Tuple[str, ...]) -> Lts:
        if name in results:
            return results[name]
        comp = self.composites[name]
        if name in stack:
            raise FspError(f"Composite {name} refers to itself", *comp.pos)
        parts = []
        for part, pos in comp.parts:
            if part in results:
                parts.append(results[part])
            elif part in self.composites:
                parts.append(self._elaborate_composite(part, results, stack + (name,)))
            else:
                raise UnboundIdentifierError(part, *pos)
        results[name] = compose_all(parts)
        return results[name]


_STOP_KEY = ("STOP",)
_ERR_KEY = ("ERROR",)


class _ProcessElaborator:
    """Ground LTS of one top-level process instance"""

    def __init__(self, spec: Specification, proc: ProcessDef, args: Tuple[int, ...]):
        self.spec = spec
        self.proc = proc
        self.locals: Dict[str, LocalDef] = {proc.main.name: proc.main}
        for local in proc.locals:
            if local.name in self.locals:
                raise DuplicateProcessError(local.name, *local.pos)
            self.locals[local.name] = local
        self.args = args

    def run(self) -> Lts:
        base_env = dict(self.spec.consts)
        base_env.update(zip((p for p, _ in self.proc.main.params), self.args))
        self.base_env = base_env

        initial = self._instance(self.proc.main.name, self.args, ())
        extension = set()
        for label in self.proc.alphabet_ext:
            extension.update(a for a, _ in self._expand(label, base_env, ()))

        lts = explore(initial, self._successors, None, is_err=lambda k: k == _ERR_KEY, name=self._name)
        result = with_alphabet(lts, extension)
        logger.debug(f"elaborated {self.proc.main.name}{list(self.args) or ''}: "
                     f"{result.num_states} states, {len(result.transitions)} transitions")
        return result

    # ---------- states ----------

    def _env_for(self, local: LocalDef, args: Sequence[int]) -> Dict[str, int]:
        env = dict(self.spec.consts)
        if local is self.proc.main:
            env = dict(self.base_env)
        env.update(zip((p for p, _ in local.params), args))
        return env

    def _instance(self, name: str, args: Tuple[int, ...], seen: Tuple) -> tuple:
        local = self.locals[name]
        if isinstance(local.body, ProcRef) and local.body.name != STOP_REF:
            if (name, args) in seen:
                raise FspError(f"Unguarded recursion through {name}", *local.pos)
            return self._resolve(local.body, self._env_for(local, args), seen + ((name, args),))
        return ("P", name, args)

    def _resolve(self, ref: ProcRef, env: Dict[str, int], seen: Tuple = ()) -> tuple:
        if ref.name in (ERROR_REF, STOP_REF):
            if ref.args:
                raise FspError(f"{ref.name} takes no indices", *ref.pos)
            return _ERR_KEY if ref.name == ERROR_REF else _STOP_KEY
        local = self.locals.get(ref.name)
        if local is None:
            raise UnboundIdentifierError(ref.name, *ref.pos)
        args = tuple(a.evaluate(env) for a in ref.args)
        if len(args) != len(local.params):
            raise FspError(f"{ref.name} expects {len(local.params)} indices, got {len(args)}", *ref.pos)
        for value, (param, spec) in zip(args, local.params):
            lo, hi = self.spec.range_bounds(spec, self.spec.consts)
            if not lo <= value <= hi:
                raise IndexOutOfRangeError(
                    f"{ref.name}: {param}={value} outside {lo}..{hi}", *ref.pos)
        return self._instance(ref.name, args, seen)

    def _successors(self, key: tuple) -> List[Tuple[Action, tuple]]:
        if key[0] == "STOP":
            return []
        if key[0] == "P":
            _, name, args = key
            local = self.locals[name]
            if isinstance(local.body, ProcRef):
                return []
            env = self._env_for(local, args)
            moves = []
            for i, term in enumerate(local.body):
                if term.guard is not None and not term.guard.evaluate(env):
                    continue
                moves.extend(self._advance(name, args, i, 0, term, env, ()))
            return moves
        _, name, args, i, k, bound = key
        local = self.locals[name]
        env = self._env_for(local, args)
        env.update(bound)
        return self._advance(name, args, i, k, local.body[i], env, bound)

    def _advance(self, name, args, i, k, term: Term, env, bound) -> List[Tuple[Action, tuple]]:
        moves = []
        for action, new_bound in self._expand(term.labels[k], env, bound):
            inner = dict(env)
            inner.update(new_bound)
            if k + 1 < len(term.labels):
                target = ("I", name, args, i, k + 1, new_bound)
            else:
                target = self._resolve(term.target, inner)
            moves.append((action, target))
        return moves

    def _expand(self, label: Label, env: Dict[str, int], bound: Tuple) -> List[Tuple[Action, Tuple]]:
        """Every ground action of a label, with the variable bindings that produce it"""
        results = [((), dict(env), bound)]
        for index in label.indices:
            extended = []
            for values, scope, b in results:
                if isinstance(index, IndexBinding):
                    lo, hi = self.spec.range_bounds(index.range, scope)
                    for v in range(lo, hi + 1):
                        inner = dict(scope)
                        inner[index.var] = v
                        extended.append((values + (v,), inner, b + ((index.var, v),)))
                elif isinstance(index, IndexRange) or self._is_range_name(index, scope):
                    spec = index.range if isinstance(index, IndexRange) else NamedRange(index.expr.name, index.expr.pos)
                    lo, hi = self.spec.range_bounds(spec, scope)
                    extended.extend((values + (v,), scope, b) for v in range(lo, hi + 1))
                else:
                    v = index.expr.evaluate(scope)
                    if v < 0:
                        raise IndexOutOfRangeError(f"Negative index {v} in label {label.base}", *label.pos)
                    extended.append((values + (v,), scope, b))
            results = extended

        if label.base == "tau":
            if label.indices:
                raise FspError("tau cannot be indexed", *label.pos)
            return [(TAU, b) for _, _, b in results]
        return [(Action(label.base, values), b) for values, _, b in results]

    def _is_range_name(self, index: Index, scope: Dict[str, int]) -> bool:
        return (isinstance(index, IndexExpr) and isinstance(index.expr, Var)
                and index.expr.name not in scope and index.expr.name in self.spec.ranges)

    @staticmethod
    def _name(key: tuple) -> str:
        if key[0] == "STOP":
            return STOP_REF
        if key[0] == "P":
            return key[1] + "".join(f"[{a}]" for a in key[2])
        _, name, args, i, k, bound = key
        where = name + "".join(f"[{a}]" for a in args)
        binding = ",".join(f"{var}={v}" for var, v in bound)
        return f"{where}.{i}.{k}" + (f"{{{binding}}}" if binding else "")


def parse(text: str) -> Dict[str, Lts]:
    """Elaborate every top-level process and composite of an FSP text"""
    return Specification(text).elaborate_all()


# ==================== PRINTING ====================

def print_fsp(m: Lts, name: str = "P") -> str:
    """
    Canonical FSP text for the reachable part of m. Local processes are named
    name_1, name_2, ... in breadth-first order; deadlocks print as STOP.
    """
    r = reachable(m)
    if r.initial == ERR:
        text = f"{name} = {ERROR_REF}"
    else:
        def local(s: int) -> str:
            if s == ERR:
                return ERROR_REF
            return name if s == r.initial else f"{name}_{s - 1}"

        equations = []
        for s in range(1, r.num_states + 1):
            edges = r.out[s]
            if not edges:
                equations.append(f"{local(s)} = {STOP_REF}")
                continue
            choices = "\n    | ".join(f"{action} -> {local(t)}" for action, t in edges)
            equations.append(f"{local(s)} = ({choices})")
        text = ",\n".join(equations)

    extra = sorted(r.alphabet - r.labels_used)
    if extra:
        text += "\n    + {" + ", ".join(str(a) for a in extra) + "}"
    return text + ".\n"
