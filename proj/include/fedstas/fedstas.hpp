#pragma once

// Umbrella header: the whole library.

#include "fedstas/client_sampling.hpp"
#include "fedstas/compression.hpp"
#include "fedstas/config.hpp"
#include "fedstas/core.hpp"
#include "fedstas/data_pipeline.hpp"
#include "fedstas/data_sampling.hpp"
#include "fedstas/engine.hpp"
#include "fedstas/io.hpp"
#include "fedstas/model.hpp"
#include "fedstas/privacy.hpp"
#include "fedstas/rng.hpp"
#include "fedstas/stratification.hpp"
