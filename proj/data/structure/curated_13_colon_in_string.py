def label(name):
    prefix = "name:"
    text = prefix + name
    return text
