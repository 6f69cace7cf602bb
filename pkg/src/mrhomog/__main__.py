from .effio import main

raise SystemExit(main())
