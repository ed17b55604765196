#include "trimlik/region.hpp"

#include <iostream>

int main() {
    std::cout << "trimlik placeholder\n";
    return 0;
}
