#pragma once

#include "rlogist/envmdp/env.hpp"
