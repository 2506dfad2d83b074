import math

RADIUS = 2.0
area = math.pi * RADIUS ** 2
if area > 10:
    print("large")
print(area)
