#include "ptshadow/cli.hpp"

int main(int argc, char** argv)
{
    return ptshadow::cli::run(argc, argv);
}
