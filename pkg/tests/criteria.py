"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

RESULTS: list[str] = []


def record(name: str, passed: bool | None, detail: str) -> None:
    status = "N/A" if passed is None else ("PASS" if passed else "FAIL")
    line = f"{status} {name}: {detail}"
    RESULTS.append(line)
    print(line)
