def compose(f, g):
    h = lambda x: f(g(x))
    return h
