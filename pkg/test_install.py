#!/usr/bin/env python3
"""
Quick script to verify the AlmostISS installation and basic functionality
"""


def test_import():
    """Test that the package can be imported successfully."""
    try:
        import almostiss
        print("✓ Package import successful")

        names = ['parse', 'from_text', 'find_intervals', 'build_regions', 'check_dpi',
                 'monte_carlo_aiss', 'load_config', 'run', 'AlmostIssError']
        for name in names:
            if hasattr(almostiss, name):
                print(f"✓ '{name}' is available")
            else:
                print(f"✗ '{name}' is missing")

        if hasattr(almostiss, '__version__'):
            print(f"✓ Package version: {almostiss.__version__}")
        else:
            print("⚠ No version information available")

        return True

    except ImportError as e:
        print(f"✗ Package import failed: {e}")
        return False


def test_basic_functionality():
    """Locate the interval of gamma12 = s^2, gamma21 = s, which is (0, 1)."""
    try:
        import almostiss

        result = almostiss.find_intervals(almostiss.from_text("s^2"), almostiss.from_text("s"))
        lower, upper = result.as_pairs()[0]
        if result.ell == 1 and abs(upper - 1.0) < 1e-6:
            print(f"✓ Interval search works: ({lower:.3g}, {upper:.6f})")
        else:
            print(f"✗ Unexpected intervals: {result.as_pairs()}")
            return False

        try:
            almostiss.parse("s +", {"s"})
            print("✗ Should have raised ExprSyntaxError")
        except almostiss.ExprSyntaxError:
            print("✓ Error handling for malformed expressions works")

        return True

    except Exception as e:
        print(f"✗ Basic functionality test failed: {e}")
        return False


def main():
    """Run all checks."""
    print("=== AlmostISS Package Test ===\n")

    print("1. Testing package import...")
    import_success = test_import()

    if not import_success:
        print("\n❌ Package import failed. Make sure to install the package first:")
        print("   pip install -e .")
        return

    print()

    print("2. Testing basic functionality...")
    func_success = test_basic_functionality()

    print()

    if import_success and func_success:
        print("🎉 All checks passed! The package is ready to use.")
        print("\nNext steps:")
        print("1. Write a config (see docs/config.md)")
        print("2. Validate it: almostiss validate --config my.json")
        print("3. Run everything: almostiss report --config my.json --out results")
    else:
        print("❌ Some checks failed. Please check the output above.")


if __name__ == "__main__":
    main()
