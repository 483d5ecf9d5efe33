#pragma once

#include "rlogist/eval/ablate.hpp"
#include "rlogist/eval/auc.hpp"
#include "rlogist/eval/compare.hpp"
#include "rlogist/eval/strategy.hpp"
#include "rlogist/eval/trace_io.hpp"
