def total(xs):
    # accumulate
    acc = 0
    for x in xs:
        # skip negatives
        if x < 0:
            continue
        acc += x
    return acc
