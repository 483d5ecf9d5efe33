#pragma once

#include "rlogist/slidegen/bundle.hpp"
#include "rlogist/slidegen/calibrate.hpp"
#include "rlogist/slidegen/config.hpp"
#include "rlogist/slidegen/generate.hpp"
#include "rlogist/slidegen/manifest.hpp"
