#include <stdio.h>

int main(void) {
  int x = 0;
  scanf("%d", &x);
  if (x == 42) {
    printf("hit\n");
  }
  return 0;
}
