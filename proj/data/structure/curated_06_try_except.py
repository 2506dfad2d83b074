def parse_int(text):
    try:
        value = int(text)
    except ValueError:
        value = None
    finally:
        text = text.strip()
    return value
