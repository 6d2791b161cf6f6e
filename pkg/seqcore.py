"""
seqcore.py

Variable-length DNA sequences and the edit actions that move between them.

A sequence is a plain uppercase ACGT string. An edit action is a
(site, kind, token) triple:

    sub@3:T   replace the base at index 3 with T
    ins@0:A   insert A before index 0 (site may equal len(x) to append)
    del@7     remove the base at index 7

All ordering and tie-breaking downstream uses the canonical action order
(site ascending, then sub < ins < del, then A < C < G < T).

Usage:
    from seqcore import EditSpace, LengthBounds, apply_edit

    space = EditSpace(LengthBounds(1, 512))
    for action in space.actions("ACGT"):
        child = apply_edit("ACGT", action)
"""

import re
from dataclasses import dataclass
from typing import NamedTuple, Optional

from errors import InvalidActionError, InvalidSequenceError

ALPHABET = ("A", "C", "G", "T")
KINDS = ("sub", "ins", "del")
KIND_RANK = {kind: i for i, kind in enumerate(KINDS)}
TOKEN_RANK = {token: i for i, token in enumerate(ALPHABET)}

DEFAULT_MIN_LEN = 1
DEFAULT_MAX_LEN = 512

_SEQUENCE_RE = re.compile(r"^[ACGT]*$")
_ACTION_RE = re.compile(r"^(sub|ins|del)@(\d+)(?::([ACGT]))?$")


class EditAction(NamedTuple):
    """One edit a = (s, e, v). The token is None for deletions."""

    site: int
    kind: str
    token: Optional[str] = None

    @property
    def sort_key(self) -> tuple:
        return (self.site, KIND_RANK[self.kind], TOKEN_RANK.get(self.token, -1))

    def __str__(self) -> str:
        return format_action(self)


@dataclass(frozen=True)
class LengthBounds:
    min_len: int = DEFAULT_MIN_LEN
    max_len: int = DEFAULT_MAX_LEN

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise InvalidSequenceError(
                f"length bounds need 1 <= min_len <= max_len, got ({self.min_len}, {self.max_len})"
            )

    def contains(self, length: int) -> bool:
        return self.min_len <= length <= self.max_len


@dataclass(frozen=True)
class EditSpace:
    """
    Valid-action generator: length bounds plus an optional inpainting mask.

    left_fixed / right_fixed are the lengths of flanking contexts that may
    never be edited. Sites of substitutions and deletions must fall inside the
    editable span [left_fixed, len(x) - right_fixed); insertion slots may also
    sit at its right edge.
    """

    bounds: LengthBounds = LengthBounds()
    left_fixed: int = 0
    right_fixed: int = 0

    def actions(self, x: str) -> list:
        return enumerate_actions(x, self.bounds, self.left_fixed, self.right_fixed)

    def validate(self, x: str) -> str:
        validate_sequence(x, self.bounds)
        if self.left_fixed + self.right_fixed > len(x):
            raise InvalidSequenceError(
                f"sequence of length {len(x)} is shorter than its fixed flanks "
                f"({self.left_fixed} + {self.right_fixed})"
            )
        return x

    def is_valid(self, x: str, action: EditAction) -> bool:
        return action in set(self.actions(x))


def validate_sequence(x: str, bounds: LengthBounds = LengthBounds()) -> str:
    """Reject non-ACGT strings and lengths outside the bounds."""
    if not isinstance(x, str) or not _SEQUENCE_RE.match(x):
        raise InvalidSequenceError(f"not an uppercase ACGT sequence: {x!r}")
    if not bounds.contains(len(x)):
        raise InvalidSequenceError(
            f"length {len(x)} outside bounds [{bounds.min_len}, {bounds.max_len}]"
        )
    return x


def enumerate_actions(
    x: str,
    bounds: LengthBounds = LengthBounds(),
    left_fixed: int = 0,
    right_fixed: int = 0,
) -> list:
    """
    Every valid edit of x exactly once, in canonical order.

    Identity substitutions are excluded; deletions vanish at min_len and
    insertions at max_len.
    """
    length = len(x)
    can_insert = length < bounds.max_len
    can_delete = length > bounds.min_len
    hi = length - right_fixed

    actions = []
    for site in range(left_fixed, hi + 1):
        in_span = site < hi
        if in_span:
            current = x[site]
            for token in ALPHABET:
                if token != current:
                    actions.append(EditAction(site, "sub", token))
        if can_insert:
            for token in ALPHABET:
                actions.append(EditAction(site, "ins", token))
        if in_span and can_delete:
            actions.append(EditAction(site, "del"))
    return actions


def apply_edit(x: str, action: EditAction) -> str:
    """Return f(x, a). Raises InvalidActionError on a malformed or out-of-range edit."""
    site, kind, token = action
    length = len(x)

    if kind == "sub":
        if not 0 <= site < length:
            raise InvalidActionError(f"{format_action(action)} out of range for length {length}")
        if token not in TOKEN_RANK:
            raise InvalidActionError(f"{format_action(action)} has no valid token")
        if x[site] == token:
            raise InvalidActionError(f"{format_action(action)} is an identity substitution")
        return x[:site] + token + x[site + 1:]

    if kind == "ins":
        if not 0 <= site <= length:
            raise InvalidActionError(f"{format_action(action)} out of range for length {length}")
        if token not in TOKEN_RANK:
            raise InvalidActionError(f"{format_action(action)} has no valid token")
        return x[:site] + token + x[site:]

    if kind == "del":
        if not 0 <= site < length:
            raise InvalidActionError(f"{format_action(action)} out of range for length {length}")
        return x[:site] + x[site + 1:]

    raise InvalidActionError(f"unknown edit kind {kind!r}")


def apply_checked(x: str, action: EditAction, space: EditSpace) -> str:
    """apply_edit that also enforces membership in space.actions(x)."""
    if not space.is_valid(x, action):
        raise InvalidActionError(f"{format_action(action)} is not a valid edit of {x!r}")
    return apply_edit(x, action)


def anchor_site(action: EditAction, child: str) -> int:
    """
    Anchor position of the most recent edit inside the child sequence.

    Substitutions and insertions anchor at their own site; a deletion anchors
    at the site that slid into the gap, clamped to the last index.
    """
    if action.kind == "del":
        return min(action.site, len(child) - 1)
    return action.site


def inverse_edit(parent: str, action: EditAction) -> EditAction:
    """Action that maps apply_edit(parent, action) back to parent."""
    if action.kind == "sub":
        return EditAction(action.site, "sub", parent[action.site])
    if action.kind == "ins":
        return EditAction(action.site, "del")
    return EditAction(action.site, "ins", parent[action.site])


def format_action(action: EditAction) -> str:
    if action.kind == "del":
        return f"del@{action.site}"
    return f"{action.kind}@{action.site}:{action.token}"


def parse_action(text: str) -> EditAction:
    """Parse 'kind@site[:token]' text back into an EditAction."""
    match = _ACTION_RE.match(text.strip())
    if not match:
        raise InvalidActionError(f"cannot parse edit action {text!r}")
    kind, site, token = match.group(1), int(match.group(2)), match.group(3)
    if kind == "del":
        return EditAction(site, "del")
    if token is None:
        raise InvalidActionError(f"{kind} action needs a token: {text!r}")
    return EditAction(site, kind, token)


def canonical_sorted(actions) -> list:
    return sorted(actions, key=lambda a: a.sort_key)
