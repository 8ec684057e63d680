from __future__ import annotations

import logging

import pytest

from fixcrew.types import BugCategory, BugInstance, ComplexityLevel, TestCase

# The adversarial suites degrade sessions thousands of times on purpose;
# their WARNING spam would drown the test output. Dataset warnings stay
# visible for the caplog assertions.
for noisy in ("fixcrew.orchestrator", "fixcrew.agents", "fixcrew.llm", "fixcrew.bench"):
    logging.getLogger(noisy).setLevel(logging.ERROR)


@pytest.fixture
def syntax_instance() -> BugInstance:
    """Low-complexity fixture: one missing colon, one test."""
    return BugInstance(
        id="syn-001",
        title="echo function with missing colon",
        description="Read one line from stdin and print it back unchanged.",
        buggy_code="def f(x) return x\nprint(f(input()))\n",
        language="python",
        category=BugCategory.SYNTAX,
        complexity=ComplexityLevel.LOW,
        tests=(TestCase(input="7", expected_output="7"),),
        reference_solution="def f(x):\n    return x\nprint(f(input()))\n",
    )


@pytest.fixture
def multi_instance() -> BugInstance:
    """High-complexity fixture: several interacting bugs, two tests."""
    return BugInstance(
        id="multi-001",
        title="running maximum with several bugs",
        description="Read n, then n integers, and print the running maximum after each value.",
        buggy_code=(
            "n = int(input())\n"
            "best = 0\n"
            "for i in range(n):\n"
            "    v = int(imput())\n"
            "    if v > best\n"
            "        best = v\n"
            "    print(best)\n"
        ),
        language="python",
        category=BugCategory.MULTIPLE,
        complexity=ComplexityLevel.HIGH,
        tests=(
            TestCase(input="3\n5\n2\n9\n", expected_output="5\n5\n9\n"),
            TestCase(input="2\n-4\n-1\n", expected_output="-4\n-1\n"),
        ),
    )


@pytest.fixture
def judged_instance() -> BugInstance:
    """Instance without tests: validation falls back to the model judge."""
    return BugInstance(
        id="judge-001",
        title="untested helper",
        description="The helper returns the wrong sign.",
        buggy_code="def sign(x):\n    return -x\n",
        language="python",
        category=BugCategory.LOGIC,
        complexity=ComplexityLevel.UNKNOWN,
        tests=(),
    )
