#include "cli.hpp"

int main(int argc, char** argv)
{
    return attngeom::cli::run(argc, argv);
}
