#pragma once

#include "rlogist/envmdp.hpp"
#include "rlogist/eval.hpp"
#include "rlogist/nets.hpp"
#include "rlogist/numkernel.hpp"
#include "rlogist/rltrain.hpp"
#include "rlogist/slidegen.hpp"
