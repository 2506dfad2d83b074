def lookup(key):
    table = {"a": 1, "b": 2}
    if key in table:
        return table[key]
    return 0
