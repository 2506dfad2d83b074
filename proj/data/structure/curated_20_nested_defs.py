def outer(n):
    def inner(k):
        return k + n
    values = []
    for i in range(n):
        values.append(inner(i))
    return values
