#pragma once

namespace se3spline::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalFailure = 3 };

int run(int argc, char** argv);

}  // namespace se3spline::cli
