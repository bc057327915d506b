"""One PASS/FAIL line per acceptance criterion, filled in by the acceptance tests."""

VERDICTS: dict = {}


def verdict(number: int, title: str, failures: list, detail: str = "") -> None:
    status = "PASS" if not failures else "FAIL"
    line = f"{status} criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    if failures:
        line += f"; {len(failures)} failure(s), first: {failures[0]}"
    VERDICTS[number] = line
    print(line)
    assert not failures, line
