"""Prompt catalog: named templates, few-shot demonstrations, rendering.

Templates live as verbatim text resources under ``templates/``; the
placeholders are {demonstration}, {x}, {doc}, and {Parametric Knowledge}.
Demonstrations are shipped per dataset under ``templates/demos/`` and
joined into the {demonstration} slot.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .retrieval import Passage

_PLACEHOLDER_RE = re.compile(r"\{([^{}]+)\}")

TEMPLATE_FILES = {
    "direct": "direct.txt",
    "reader": "reader.txt",
    "rrr_rewriter": "rrr_rewriter.txt",
    "extraction": "extraction.txt",
    "errr_optimizer": "errr_optimizer.txt",
    "student_optimizer": "student_optimizer.txt",
}

KNOWN_DEMO_SETS = ("ambignq", "popqa", "hotpotqa")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    demonstrations: tuple[str, ...] = ()

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.body))

    def render(self, values: dict[str, str]) -> str:
        """Substitute every placeholder; unresolved or unknown names are errors."""
        mapping = dict(values)
        if "{demonstration}" in self.body and "demonstration" not in mapping:
            mapping["demonstration"] = "\n".join(self.demonstrations)
        needed = self.placeholders()
        missing = needed - mapping.keys()
        if missing:
            raise ValueError(f"template {self.name!r}: unresolved placeholders {sorted(missing)}")
        extra = mapping.keys() - needed
        if extra:
            raise ValueError(f"template {self.name!r}: unknown placeholders {sorted(extra)}")
        return _PLACEHOLDER_RE.sub(lambda m: mapping[m.group(1)], self.body)


def load_template_text(name: str) -> str:
    fname = TEMPLATE_FILES[name]
    return (resources.files("errr") / "templates" / fname).read_text(encoding="utf-8")


def render_doc_block(passages: list[Passage]) -> str:
    """Retrieval order, title then text, blank-line separated."""
    parts = []
    for p in passages:
        parts.append(f"{p.title}\n{p.text}" if p.title else p.text)
    return "\n\n".join(parts)


def _load_demo_file(dataset: str) -> dict:
    name = dataset if dataset in KNOWN_DEMO_SETS else "default"
    data = (resources.files("errr") / "templates" / "demos" / f"{name}.toml").read_bytes()
    return tomllib.loads(data.decode("utf-8"))


@dataclass
class PromptCatalog:
    """All templates plus the demonstration set for one dataset."""

    dataset: str = "default"
    reader_demos: tuple[str, ...] = ()
    rewriter_demos: tuple[str, ...] = ()
    optimizer_demos: tuple[str, ...] = ()
    _templates: dict[str, str] = field(default_factory=dict, repr=False)

    @classmethod
    def for_dataset(cls, dataset: str) -> "PromptCatalog":
        raw = _load_demo_file(dataset.lower())
        reader = tuple(
            f"Question: {d['question']} Answer: {d['answer']}**" for d in raw.get("reader", [])
        )
        rewriter = tuple(
            f"Question: {d['question']} Answer: {d['queries']}**" for d in raw.get("rewriter", [])
        )
        optimizer = tuple(
            f"Context: {d['context']} Question: {d['question']} Queries: {d['queries']}**"
            for d in raw.get("optimizer", [])
        )
        return cls(
            dataset=dataset.lower(),
            reader_demos=reader,
            rewriter_demos=rewriter,
            optimizer_demos=optimizer,
        )

    def template(self, name: str, demos: tuple[str, ...] = ()) -> PromptTemplate:
        if name not in self._templates:
            self._templates[name] = load_template_text(name)
        return PromptTemplate(name=name, body=self._templates[name], demonstrations=demos)

    # -- stage renderers ---------------------------------------------------

    def extraction_prompt(self, question: str) -> str:
        return self.template("extraction").render({"x": question})

    def rewriter_prompt(self, question: str) -> str:
        return self.template("rrr_rewriter", self.rewriter_demos).render({"x": question})

    def optimizer_prompt(self, context: str, question: str, style: str = "teacher") -> str:
        if style == "teacher":
            return self.template("errr_optimizer", self.optimizer_demos).render(
                {"Parametric Knowledge": context, "x": question}
            )
        if style == "student":
            return self.student_input(context, question)
        raise ValueError(f"unknown optimizer prompt style {style!r}")

    def student_input(self, context: str, question: str) -> str:
        """The short eliciting form a distilled student is trained on."""
        return self.template("student_optimizer").render(
            {"Parametric Knowledge": context, "x": question}
        )

    def direct_prompt(self, question: str) -> str:
        return self.template("direct", self.reader_demos).render({"x": question})

    def reader_prompt(self, question: str, passages: list[Passage]) -> str:
        return self.template("reader", self.reader_demos).render(
            {"doc": render_doc_block(passages), "x": question}
        )
