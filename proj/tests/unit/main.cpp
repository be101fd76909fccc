#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "sdf3d/log.hpp"

int main(int argc, char** argv)
{
    sdf3d::log::set_threshold(sdf3d::log::Level::Warn);
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
