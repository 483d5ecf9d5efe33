#pragma once

#include "rlogist/nets/arch.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/nets/checkpoint.hpp"
#include "rlogist/nets/layers.hpp"
#include "rlogist/nets/pretrain.hpp"
#include "rlogist/nets/views.hpp"
