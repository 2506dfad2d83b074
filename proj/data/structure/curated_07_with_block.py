def read_lines(path):
    with open(path) as handle:
        lines = handle.readlines()
    return [line.strip() for line in lines]
