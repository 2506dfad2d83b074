def build(name, size):
    record = dict(
        name=name,
        size=size,
    )
    return record
