#pragma once

#include "rlogist/rltrain/buffer.hpp"
#include "rlogist/rltrain/collect.hpp"
#include "rlogist/rltrain/config.hpp"
#include "rlogist/rltrain/ppo.hpp"
#include "rlogist/rltrain/train.hpp"
