// Acceptance suite: one pass/fail line per criterion. Populated in full
// below; build placeholder while the library stabilizes.
#include <iostream>

int main() {
    std::cout << "acceptance suite placeholder\n";
    return 1;
}
