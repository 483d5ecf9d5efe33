#pragma once

#include "rlogist/numkernel/adam.hpp"
#include "rlogist/numkernel/network.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/softmax.hpp"
#include "rlogist/numkernel/tape.hpp"
#include "rlogist/numkernel/tensor.hpp"
