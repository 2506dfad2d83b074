def quote(s):
    if s == ':':
        return 'colon'
    return s
