#pragma once

#include "privmark/bounds.hpp"
#include "privmark/equilibrium.hpp"
#include "privmark/mechanisms.hpp"
#include "privmark/model.hpp"
#include "privmark/numeric.hpp"
#include "privmark/rng.hpp"
#include "privmark/simulate.hpp"
