from __future__ import annotations

import pytest

from multiretriever.corpus import CodeSnippet, CompletionTask, SourceFile, TaskKind, snippet_id_for


def make_snippet(text: str, name: str = "s.java", repo: str = "r") -> CodeSnippet:
    n = max(1, text.count("\n") + (0 if text.endswith("\n") else 1))
    return CodeSnippet(snippet_id_for(repo, name, 1, n), repo, name, 1, n, text)


def make_task(prefix: str, ground_truth: str, suffix: str, kind: TaskKind = TaskKind.RANDOM_LINE,
              path: str = "q.java", task_id: str | None = None) -> CompletionTask:
    line = prefix.count("\n") + 1
    return CompletionTask(task_id or f"r/{path}#{kind.abbrev}@{line}", kind, prefix, suffix,
                          ground_truth, ("r", path), line)


JAVA_FIXTURE = """\
package demo;

public class Account {
    private int balance;

    public int deposit(int amount) {
        int next = balance + amount;
        balance = next;
        return balance;
    }
}
"""


@pytest.fixture
def java_file() -> SourceFile:
    return SourceFile.from_text("demo", "src/Account.java", JAVA_FIXTURE)


@pytest.fixture
def small_repo(tmp_path):
    root = tmp_path / "repo"
    (root / "pkg").mkdir(parents=True)
    (root / "a.java").write_text("class A {\n  int f(int x) {\n    return x + 1;\n  }\n}\n")
    (root / "b.py").write_text("def g(y):\n    z = y * 2\n    return z\n")
    (root / "c.bin").write_bytes(b"\x00\x01")
    return root


def demo_java(i: int) -> str:
    """A small class with two methods; content varies with ``i``."""
    return (
        f"package demo.p{i % 3};\n"
        "\n"
        f"public class Service{i} {{\n"
        f"    private int count{i} = {i};\n"
        "\n"
        f"    public int add{i}(int value) {{\n"
        f"        int next = count{i} + value * {i + 1};\n"
        f"        count{i} = next;\n"
        f"        return next;\n"
        "    }\n"
        "\n"
        f"    public String label{i}(String name) {{\n"
        f"        String prefix = \"svc{i}-\";\n"
        "        return prefix + name.trim();\n"
        "    }\n"
        "}\n"
    )


def write_demo_repo(root, n: int = 20):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        (root / f"Service{i:02d}.java").write_text(demo_java(i))
    return root


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
