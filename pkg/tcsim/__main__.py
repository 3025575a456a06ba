"""
Entry point for python -m tcsim
"""

from tcsim.main import main

if __name__ == "__main__":
    main()
