// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
