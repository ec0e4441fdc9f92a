x = int(input())
if x == 42:
    print("hit")
print("done")
