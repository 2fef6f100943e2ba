#include <iostream>

#include "citygan/cli.hpp"

int main(int argc, char** argv)
{
    return citygan::dispatch(argc, argv, std::cout, std::cerr);
}
