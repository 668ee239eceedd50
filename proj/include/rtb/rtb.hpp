#pragma once

// Umbrella header.

#include "rtb/config.hpp"
#include "rtb/csv.hpp"
#include "rtb/datagen.hpp"
#include "rtb/errors.hpp"
#include "rtb/harness.hpp"
#include "rtb/inference.hpp"
#include "rtb/methods.hpp"
#include "rtb/mi.hpp"
#include "rtb/mvn.hpp"
#include "rtb/rng.hpp"
