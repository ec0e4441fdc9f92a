n = int(input())
if n < 0:
    print("neg")
elif n == 0:
    print("zero")
print("done")
