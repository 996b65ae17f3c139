#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace coviz::cli
{
    enum ExitCode : int
    {
        kOk = 0,
        kUsage = 2,
        kData = 3,
        kEnvironment = 4,
    };

    // args excludes the program name.
    int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
}
