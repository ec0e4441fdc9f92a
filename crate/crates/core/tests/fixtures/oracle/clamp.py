def clamp(v):
    if v > 100:
        return 100
    return v


x = float(input())
print(clamp(x))
