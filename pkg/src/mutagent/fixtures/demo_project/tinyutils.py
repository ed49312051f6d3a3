"""Tiny text and number helpers exercised by the demo campaign."""


def clamp(value, low, high):
    if value < low:
        return low
    if value > high:
        return high
    return value


def running_total(values):
    totals = []
    acc = 0
    for v in values:
        acc = acc + v
        totals.append(acc)
    return totals


def first_line(text):
    parts = text.split("\n", 1)
    if len(parts) == 0:
        return ""
    return parts[0]
