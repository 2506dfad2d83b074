class Point:
    """A 2D point."""

    def __init__(self, x, y):
        """Store coordinates."""
        self.x = x
        self.y = y

    def norm(self):
        return (self.x ** 2 + self.y ** 2) ** 0.5
