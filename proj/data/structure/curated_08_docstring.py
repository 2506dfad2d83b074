def area(width, height):
    """Rectangle area."""
    return width * height
